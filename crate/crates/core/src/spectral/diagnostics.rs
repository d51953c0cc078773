use serde::Serialize;

use super::svd::{truncated_svd_with, SvdPath};
use crate::error::{Error, Result};
use crate::model::{LabelVector, Matrix};

/// Population-level signal and incoherence measures of a probability matrix.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub k: usize,
    pub n: usize,
    /// K-th largest singular value.
    pub sigma_k: f64,
    /// Largest entry.
    pub max_entry: f64,
    /// `K n max_entry / sigma_k^2`; infinite when `sigma_k` vanishes.
    pub misclustering_bound: f64,
    pub rank_deficient: bool,
    /// `sqrt(n) * max_i |U_i.|`.
    pub left_incoherence: f64,
    /// `sqrt(n) * max_i |V_i.|`.
    pub right_incoherence: f64,
}

pub fn theory_diagnostics(p: &Matrix, k: usize) -> Result<DiagnosticsReport> {
    if p.nrows() != p.ncols() {
        return Err(Error::Dimension("probability matrix must be square".into()));
    }
    let n = p.nrows();
    let f = truncated_svd_with(p, k, SvdPath::Dense)?;
    let sigma_1 = f.d[0];
    let sigma_k = f.d[k - 1];
    let rank_deficient = sigma_k <= 1e-12 * sigma_1.max(f64::MIN_POSITIVE);
    let max_entry = p.iter().copied().fold(0.0, f64::max);
    let misclustering_bound = if rank_deficient {
        f64::INFINITY
    } else {
        k as f64 * n as f64 * max_entry / (sigma_k * sigma_k)
    };
    let max_row = |m: &Matrix| (0..m.nrows()).map(|i| m.row(i).norm()).fold(0.0, f64::max);
    let sqrt_n = (n as f64).sqrt();
    Ok(DiagnosticsReport {
        k,
        n,
        sigma_k: if rank_deficient { 0.0 } else { sigma_k },
        max_entry,
        misclustering_bound,
        rank_deficient,
        left_incoherence: sqrt_n * max_row(&f.u),
        right_incoherence: sqrt_n * max_row(&f.v),
    })
}

/// Distance between two community centres in the right singular embedding,
/// next to the value `sqrt(1/n_k + 1/n_l)` that exact low-rank structure
/// implies.
#[derive(Debug, Clone, Serialize)]
pub struct CentreDistance {
    pub k: usize,
    pub l: usize,
    pub observed: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingGeometry {
    /// Largest distance of a row of V from its community centre.
    pub max_within_spread: f64,
    pub pairs: Vec<CentreDistance>,
}

impl EmbeddingGeometry {
    pub fn max_pair_deviation(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| (p.observed - p.expected).abs())
            .fold(0.0, f64::max)
    }
}

/// Measures how closely the rank-K right singular vectors of `p` collapse to
/// one point per community.
pub fn right_embedding_geometry(p: &Matrix, labels: &LabelVector) -> Result<EmbeddingGeometry> {
    if labels.len() != p.ncols() {
        return Err(Error::Dimension(format!(
            "{} labels for a matrix with {} columns",
            labels.len(),
            p.ncols()
        )));
    }
    labels.require_nonempty()?;
    let k = labels.k();
    let v = truncated_svd_with(p, k, SvdPath::Dense)?.v;
    let members = labels.members();
    let centres: Vec<Matrix> = members
        .iter()
        .map(|m| {
            let mut c = Matrix::zeros(1, k);
            for &i in m {
                c += v.row(i);
            }
            c / m.len() as f64
        })
        .collect();
    let mut max_within_spread = 0.0f64;
    for (c, m) in members.iter().enumerate() {
        for &i in m {
            max_within_spread = max_within_spread.max((v.row(i) - &centres[c]).norm());
        }
    }
    let mut pairs = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            pairs.push(CentreDistance {
                k: a,
                l: b,
                observed: (&centres[a] - &centres[b]).norm(),
                expected: (1.0 / members[a].len() as f64 + 1.0 / members[b].len() as f64).sqrt(),
            });
        }
    }
    Ok(EmbeddingGeometry {
        max_within_spread,
        pairs,
    })
}
