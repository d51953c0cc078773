//! Method-of-moments estimation of NSBM parameters given community labels,
//! plus the block-model baselines used for comparison.
//!
//! With block means `T[i, l] = sum_{j in G_l} A[i, j] / n_l`:
//!
//! * `theta_i = max(T[i, c_i], 1 / n_{c_i})`
//! * `Psi_k` holds the communities `l` with `T[i, l] > 0` for every `i` in `G_k`
//! * `Y[i, l] = log(max(T[i, l], 1 / n_l))`
//! * `lambda_i = sum_l (Y[i, k] - Y[i, l]) / mean_{j in G_k} sum_l (Y[j, k] - Y[j, l])`
//! * `B[k, l] = exp(-mean_{i in G_k} (Y[i, k] - Y[i, l]))`
//!
//! where the sums over `l` run over `Psi_k` without `k`. `B[k, k]` is fixed
//! at 1 and `B[k, l]` is 0 outside `Psi_k`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, block_power, rows, DirectedGraph, LabelVector, Matrix};
use crate::spectral::{baseline_cluster, ClusterMethod, KMeansConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// When set, `Psi_k` admits `l` if at least this fraction of the rows of
    /// `G_k` (and at least one) have `T[i, l] > 0`; the remaining rows use
    /// the floored `Y`.
    pub relaxed_psi: Option<f64>,
}

/// Block means with their truncated logarithms and the usable target sets.
#[derive(Debug, Clone, Serialize)]
pub struct MomentTable {
    #[serde(with = "rows")]
    pub t: Matrix,
    #[serde(with = "rows")]
    pub y: Matrix,
    pub psi: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityFailure {
    pub community: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct NsbmEstimate {
    pub labels: LabelVector,
    pub theta_hat: Vec<f64>,
    /// `None` for nodes of communities whose `lambda` is not estimable.
    pub lambda_hat: Vec<Option<f64>>,
    #[serde(with = "rows")]
    pub b_hat: Matrix,
    pub psi: Vec<Vec<usize>>,
    pub failures: Vec<CommunityFailure>,
}

impl NsbmEstimate {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// `lambda` values with unestimated entries replaced by 1, the
    /// community mean every `lambda` is constrained to.
    pub fn lambda_or_unit(&self) -> Vec<f64> {
        self.lambda_hat.iter().map(|l| l.unwrap_or(1.0)).collect()
    }

    /// `M[k, l]`, the mean of `theta_i B[k, l]^lambda_i` over `i` in `G_k`.
    /// Unestimated `lambda` count as 1 and `0^negative` as 0.
    pub fn connection_strength(&self) -> Result<Matrix> {
        self.labels.require_nonempty()?;
        let (rates, _) = self.rate_table(&self.lambda_or_unit());
        let k = self.labels.k();
        let sizes = self.labels.sizes();
        let mut m = Matrix::zeros(k, k);
        for i in 0..self.labels.len() {
            let c = self.labels.get(i);
            for l in 0..k {
                m[(c, l)] += rates[(i, l)] / sizes[c] as f64;
            }
        }
        Ok(m)
    }

    /// `theta_i B[c_i, l]^lambda_i` for every node and community, with the
    /// number of undefined powers that were set to 0.
    fn rate_table(&self, lambda: &[f64]) -> (Matrix, usize) {
        let (n, k) = (self.labels.len(), self.labels.k());
        let mut rates = Matrix::zeros(n, k);
        let mut undefined = 0;
        for i in 0..n {
            for l in 0..k {
                let base = self.b_hat[(self.labels.get(i), l)];
                rates[(i, l)] = match block_power(base, lambda[i]) {
                    Some(p) => self.theta_hat[i] * p,
                    None => {
                        undefined += 1;
                        0.0
                    }
                };
            }
        }
        (rates, undefined)
    }
}

/// `T[i, l]`: the total weight from node `i` into community `l`, divided by `n_l`.
pub fn block_means(a: &DirectedGraph, labels: &LabelVector) -> Result<Matrix> {
    let n = a.n();
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for a graph with {n} nodes",
            labels.len()
        )));
    }
    labels.require_nonempty()?;
    let k = labels.k();
    let sizes = labels.sizes();
    let w = a.weights();
    let mut t = Matrix::zeros(n, k);
    for j in 0..n {
        let l = labels.get(j);
        for i in 0..n {
            t[(i, l)] += w[(i, j)];
        }
    }
    for l in 0..k {
        t.column_mut(l).unscale_mut(sizes[l] as f64);
    }
    Ok(t)
}

pub fn moment_table(t: &Matrix, labels: &LabelVector, opts: &EstimateOptions) -> Result<MomentTable> {
    let (n, k) = (labels.len(), labels.k());
    if t.nrows() != n || t.ncols() != k {
        return Err(Error::Dimension(format!(
            "block mean table is {} x {}, expected {n} x {k}",
            t.nrows(),
            t.ncols()
        )));
    }
    labels.require_nonempty()?;
    let sizes = labels.sizes();
    let y = Matrix::from_fn(n, k, |i, l| t[(i, l)].max(1.0 / sizes[l] as f64).ln());
    let psi = labels
        .members()
        .iter()
        .map(|group| {
            (0..k)
                .filter(|&l| {
                    let positive = group.iter().filter(|&&i| t[(i, l)] > 0.0).count();
                    match opts.relaxed_psi {
                        None => positive == group.len(),
                        Some(frac) => positive > 0 && positive as f64 >= frac * group.len() as f64,
                    }
                })
                .collect()
        })
        .collect();
    Ok(MomentTable {
        t: t.clone(),
        y,
        psi,
    })
}

/// Estimates `(theta, lambda, B)` from an observed graph and labels.
pub fn estimate_nsbm(a: &DirectedGraph, labels: &LabelVector) -> Result<NsbmEstimate> {
    estimate_nsbm_with(a, labels, &EstimateOptions::default())
}

pub fn estimate_nsbm_with(
    a: &DirectedGraph,
    labels: &LabelVector,
    opts: &EstimateOptions,
) -> Result<NsbmEstimate> {
    let t = block_means(a, labels)?;
    estimate_from_block_means(&t, labels, opts)
}

/// The estimator applied to a given block-mean table. Feeding the exact
/// population means `theta_i B[c_i, l]^lambda_i` returns the true parameters.
pub fn estimate_from_block_means(
    t: &Matrix,
    labels: &LabelVector,
    opts: &EstimateOptions,
) -> Result<NsbmEstimate> {
    let table = moment_table(t, labels, opts)?;
    let (n, k) = (labels.len(), labels.k());
    let sizes = labels.sizes();
    let y = &table.y;

    let theta_hat: Vec<f64> = (0..n)
        .map(|i| {
            let c = labels.get(i);
            t[(i, c)].max(1.0 / sizes[c] as f64)
        })
        .collect();
    let mut lambda_hat = vec![None; n];
    let mut b_hat = Matrix::zeros(k, k);
    let mut failures = Vec::new();

    for (c, group) in labels.members().iter().enumerate() {
        b_hat[(c, c)] = 1.0;
        let targets: Vec<usize> = table.psi[c].iter().copied().filter(|&l| l != c).collect();
        if targets.is_empty() {
            failures.push(CommunityFailure {
                community: c,
                reason: "no other community receives edges from every member".into(),
            });
            continue;
        }
        let nk = group.len() as f64;
        for &l in &targets {
            let mean_gap: f64 = group.iter().map(|&i| y[(i, c)] - y[(i, l)]).sum::<f64>() / nk;
            b_hat[(c, l)] = (-mean_gap).exp();
        }
        let contrast = |i: usize| -> f64 { targets.iter().map(|&l| y[(i, c)] - y[(i, l)]).sum() };
        let denom: f64 = group.iter().map(|&j| contrast(j)).sum::<f64>() / nk;
        if denom == 0.0 || !denom.is_finite() {
            failures.push(CommunityFailure {
                community: c,
                reason: "block means show no contrast between communities".into(),
            });
            continue;
        }
        for &i in group {
            lambda_hat[i] = Some(contrast(i) / denom);
        }
    }

    Ok(NsbmEstimate {
        labels: labels.clone(),
        theta_hat,
        lambda_hat,
        b_hat,
        psi: table.psi,
        failures,
    })
}

/// `P[i, j] = theta_i B[c_i, c_j]^lambda_i` from an estimate, zero diagonal.
/// Entries with `B = 0` and a negative `lambda` are set to 0.
pub fn reconstruct_p(est: &NsbmEstimate) -> Result<Matrix> {
    if let Some(f) = est.failures.first() {
        return Err(Error::Estimation {
            community: f.community + 1,
            reason: f.reason.clone(),
        });
    }
    let lambda: Vec<f64> = est.lambda_hat.iter().map(|l| l.expect("complete estimate")).collect();
    let (rates, undefined) = est.rate_table(&lambda);
    if undefined > 0 {
        log::warn!("{undefined} node-block rates had B = 0 with negative lambda; set to 0");
    }
    Ok(model::expand_rates(&rates, &est.labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// NSBM method of moments on right SC labels.
    Nsbm,
    /// Directed SBM block means on symmetric SC labels.
    Dsbm,
    /// Degree-corrected directed SBM on symmetric SC labels.
    Dcsbm,
    /// Stochastic co-blockmodel: left SSC sender groups and right SC
    /// receiver groups, degree corrected.
    Scbm,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Nsbm,
        Estimator::Dsbm,
        Estimator::Dcsbm,
        Estimator::Scbm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Nsbm => "nsbm",
            Estimator::Dsbm => "dsbm",
            Estimator::Dcsbm => "dcsbm",
            Estimator::Scbm => "scbm",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator `{s}`")))
    }
}

/// Block-model fit over a sender partition `rows` and receiver partition
/// `cols`. Each block's rate is its edge mass over its ordered node pairs,
/// self-pairs excluded. With `degree_correct`, entry `(i, j)` is further
/// scaled by `i`'s out-weight relative to its sender group's mean and `j`'s
/// in-weight relative to its receiver group's mean.
pub fn block_model_fit(
    a: &DirectedGraph,
    rows: &LabelVector,
    cols: &LabelVector,
    degree_correct: bool,
) -> Result<Matrix> {
    let n = a.n();
    if rows.len() != n || cols.len() != n {
        return Err(Error::Dimension("partitions must cover every node".into()));
    }
    let (kr, kc) = (rows.k(), cols.k());
    let w = a.weights();
    let mut mass = Matrix::zeros(kr, kc);
    let mut pairs = Matrix::zeros(kr, kc);
    let row_sizes = rows.sizes();
    let col_sizes = cols.sizes();
    for r in 0..kr {
        for s in 0..kc {
            pairs[(r, s)] = (row_sizes[r] * col_sizes[s]) as f64;
        }
    }
    for i in 0..n {
        pairs[(rows.get(i), cols.get(i))] -= 1.0;
    }
    for j in 0..n {
        for i in 0..n {
            mass[(rows.get(i), cols.get(j))] += w[(i, j)];
        }
    }
    let rate = mass.zip_map(&pairs, |m, p| if p > 0.0 { m / p } else { 0.0 });

    let (out_factor, in_factor) = if degree_correct {
        let out_w = a.row_sums();
        let in_w: Vec<f64> = (0..n).map(|j| w.column(j).sum()).collect();
        (
            relative_to_group_mean(&out_w, rows),
            relative_to_group_mean(&in_w, cols),
        )
    } else {
        (vec![1.0; n], vec![1.0; n])
    };
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            out_factor[i] * in_factor[j] * rate[(rows.get(i), cols.get(j))]
        }
    }))
}

fn relative_to_group_mean(values: &[f64], labels: &LabelVector) -> Vec<f64> {
    let sizes = labels.sizes();
    let mut totals = vec![0.0; labels.k()];
    for (i, &v) in values.iter().enumerate() {
        totals[labels.get(i)] += v;
    }
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = labels.get(i);
            let mean = totals[c] / sizes[c] as f64;
            if mean > 0.0 {
                v / mean
            } else {
                0.0
            }
        })
        .collect()
}

/// Probability-matrix estimate from one of the baseline block models, with
/// its own clustering step.
pub fn estimate_baseline(
    a: &DirectedGraph,
    k: usize,
    model: Estimator,
    cfg: &KMeansConfig,
) -> Result<Matrix> {
    match model {
        Estimator::Nsbm => {
            let labels = baseline_cluster(a, k, ClusterMethod::RightSc, cfg)?;
            reconstruct_p(&estimate_nsbm(a, &labels)?)
        }
        Estimator::Dsbm | Estimator::Dcsbm => {
            let labels = baseline_cluster(a, k, ClusterMethod::SymmetricSc, cfg)?;
            block_model_fit(a, &labels, &labels, model == Estimator::Dcsbm)
        }
        Estimator::Scbm => {
            let senders = baseline_cluster(a, k, ClusterMethod::LeftSsc, cfg)?;
            let receivers = baseline_cluster(a, k, ClusterMethod::RightSc, cfg)?;
            block_model_fit(a, &senders, &receivers, true)
        }
    }
}
