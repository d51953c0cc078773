//! Rank-K truncated SVD.
//!
//! Dense inputs go through a full SVD. Sparse inputs (under 10% nonzero) use
//! block subspace iteration on a CSR copy with Rayleigh-Ritz extraction,
//! falling back to the dense path if the iteration does not converge.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Matrix;

/// Rank-K factors with `M ~ U diag(d) V^T`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// rows x K, orthonormal columns.
    pub u: Matrix,
    /// K singular values, non-increasing.
    pub d: Vec<f64>,
    /// cols x K, orthonormal columns.
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.u.clone();
        for (c, &s) in self.d.iter().enumerate() {
            scaled.column_mut(c).scale_mut(s);
        }
        scaled * self.v.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvdPath {
    /// Sparse when fewer than 10% of entries are nonzero.
    #[default]
    Auto,
    Dense,
    Sparse,
}

pub const SPARSE_DENSITY_THRESHOLD: f64 = 0.10;
const OVERSAMPLE: usize = 10;
const MAX_ITER: usize = 500;
const RESIDUAL_TOL: f64 = 1e-10;
const MIN_SPARSE_DIM: usize = 32;
const START_SEED: u64 = 0x5eed_5eed;

pub fn truncated_svd(m: &Matrix, k: usize) -> Result<SvdFactors> {
    truncated_svd_with(m, k, SvdPath::Auto)
}

pub fn truncated_svd_with(m: &Matrix, k: usize, path: SvdPath) -> Result<SvdFactors> {
    let min_dim = m.nrows().min(m.ncols());
    if k == 0 || k > min_dim {
        return Err(Error::InvalidParameter(format!(
            "rank {k} must lie in 1..={min_dim}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let sparse = match path {
        SvdPath::Dense => false,
        SvdPath::Sparse => true,
        SvdPath::Auto => {
            let nnz = m.iter().filter(|&&v| v != 0.0).count();
            (nnz as f64) < SPARSE_DENSITY_THRESHOLD * (m.nrows() * m.ncols()) as f64
        }
    };
    let block = (k + OVERSAMPLE).min(min_dim);
    let mut factors = if sparse && block < min_dim && min_dim >= MIN_SPARSE_DIM {
        match subspace_svd(&Csr::from_dense(m), k, block) {
            Some(f) => f,
            None => {
                log::debug!("subspace iteration did not converge; using dense SVD");
                dense_svd(m, k)?
            }
        }
    } else {
        dense_svd(m, k)?
    };
    fix_signs(&mut factors);
    Ok(factors)
}

fn dense_svd(m: &Matrix, k: usize) -> Result<SvdFactors> {
    let svd = m.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return V".into()))?;
    Ok(select_top(&u, svd.singular_values.as_slice(), &v_t.transpose(), k))
}

/// Keeps the `k` largest singular triplets in non-increasing order.
fn select_top(u: &Matrix, s: &[f64], v: &Matrix, k: usize) -> SvdFactors {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order.truncate(k);
    SvdFactors {
        u: u.select_columns(&order),
        d: order.iter().map(|&i| s[i]).collect(),
        v: v.select_columns(&order),
    }
}

/// Makes the largest-magnitude entry of each column of V non-negative
/// (first index on ties), flipping the matching column of U.
fn fix_signs(f: &mut SvdFactors) {
    for c in 0..f.d.len() {
        let col = f.v.column(c);
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            f.v.column_mut(c).neg_mut();
            f.u.column_mut(c).neg_mut();
        }
    }
}

fn subspace_svd(a: &Csr, k: usize, block: usize) -> Option<SvdFactors> {
    let at = a.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let start = DMatrix::from_fn(a.cols, block, |_, _| rng.random_range(-1.0..1.0));
    let mut omega = start.qr().q();

    for _ in 0..MAX_ITER {
        let y = a.mul_dense(&omega);
        let svd = y.svd(true, true);
        let (uy, wt) = (svd.u?, svd.v_t?);
        let top = select_top(&uy, svd.singular_values.as_slice(), &(&omega * wt.transpose()), block);
        let sigma_max = top.d[0];
        if sigma_max == 0.0 {
            return None;
        }
        let r = at.mul_dense(&top.u);
        let converged = (0..k).all(|c| {
            let residual = (r.column(c) - top.v.column(c) * top.d[c]).norm();
            residual <= RESIDUAL_TOL * sigma_max
        });
        if converged {
            return Some(SvdFactors {
                u: top.u.columns(0, k).into_owned(),
                d: top.d[..k].to_vec(),
                v: top.v.columns(0, k).into_owned(),
            });
        }
        omega = r.qr().q();
    }
    None
}

/// Compressed sparse row storage.
struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    fn from_dense(m: &Matrix) -> Self {
        let mut indptr = Vec::with_capacity(m.nrows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            indptr,
            indices,
            values,
        }
    }

    fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.indices.len()];
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.rows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                indices[next[j]] = i;
                values[next[j]] = self.values[p];
                next[j] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    fn mul_dense(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut oc = out.column_mut(c);
            for i in 0..self.rows {
                let mut acc = 0.0;
                for p in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.values[p] * xc[self.indices[p]];
                }
                oc[i] = acc;
            }
        }
        out
    }
}
