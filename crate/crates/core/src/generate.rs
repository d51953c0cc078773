//! Random graph samplers and the simulation parameter designs.
//!
//! Every sampler draws row `i` from its own ChaCha8 stream keyed by
//! `(seed, purpose, i)`, and entry `(i, j)` from a fixed position inside
//! that stream. Output depends only on the seed, never on iteration order
//! or thread count.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_block_matrix, expected_matrix, DirectedGraph, LabelVector, Matrix,
    NominationFunctionSet, NsbmParams,
};

mod purpose {
    pub const SBM: u64 = 1;
    pub const NOMINATION: u64 = 2;
    pub const NSBM: u64 = 3;
    pub const POISSON: u64 = 4;
    pub const PARAMS: u64 = 5;
}

/// ChaCha8 stream for one row of one sampler.
pub(crate) fn row_stream(seed: u64, purpose: u64, row: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(row);
    rng
}

/// Uniform on [0, 1) from the top 53 bits of one 64-bit word.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Independent Bernoulli draws with the given probabilities; the diagonal
/// stays empty. Entry `(i, j)` always consumes word pair `j` of row `i`.
fn sample_bernoulli(prob: &Matrix, seed: u64, purpose: u64) -> Result<DirectedGraph> {
    let n = prob.nrows();
    let mut weights = Matrix::zeros(n, n);
    for i in 0..n {
        let mut rng = row_stream(seed, purpose, i as u64);
        for j in 0..n {
            let u = unit(&mut rng);
            if i != j && u < prob[(i, j)] {
                weights[(i, j)] = 1.0;
            }
        }
    }
    DirectedGraph::new(weights)
}

/// Independent Poisson draws. Entry `(i, j)` reads row `i`'s stream from
/// word `j << 32`, so each edge owns a disjoint block of the stream.
fn sample_poisson(means: &Matrix, seed: u64) -> Result<DirectedGraph> {
    let n = means.nrows();
    let mut weights = Matrix::zeros(n, n);
    for i in 0..n {
        let mut rng = row_stream(seed, purpose::POISSON, i as u64);
        for j in 0..n {
            let mean = means[(i, j)];
            if !(mean >= 0.0 && mean.is_finite()) {
                return Err(Error::Range(format!(
                    "Poisson mean {mean} at ({i}, {j}) must be finite and non-negative"
                )));
            }
            if i == j || mean == 0.0 {
                continue;
            }
            rng.set_word_pos((j as u128) << 32);
            let dist = Poisson::new(mean)
                .map_err(|e| Error::Numerical(format!("Poisson({mean}): {e}")))?;
            weights[(i, j)] = dist.sample(&mut rng);
        }
    }
    DirectedGraph::new(weights)
}

/// Directed SBM: `A[i, j] ~ Bernoulli(B[c_i, c_j])` independently.
pub fn sample_directed_sbm(b: &Matrix, labels: &LabelVector, seed: u64) -> Result<DirectedGraph> {
    check_block_matrix(b, labels)?;
    let n = labels.len();
    let prob = DMatrix::from_fn(n, n, |i, j| b[(labels.get(i), labels.get(j))]);
    sample_bernoulli(&prob, seed, purpose::SBM)
}

/// Applies a nomination mask to a binary graph: each existing edge `i -> j`
/// is kept with probability `f_i(B[c_i, c_j])`.
pub fn sample_nominated(
    a: &DirectedGraph,
    b: &Matrix,
    labels: &LabelVector,
    fns: &NominationFunctionSet,
    seed: u64,
) -> Result<DirectedGraph> {
    check_block_matrix(b, labels)?;
    let (n, k) = (a.n(), labels.k());
    if labels.len() != n || fns.len() != n {
        return Err(Error::Dimension(format!(
            "graph has {n} nodes, labels {} and nomination functions {}",
            labels.len(),
            fns.len()
        )));
    }
    if !a.is_binary() {
        return Err(Error::InvalidParameter(
            "nomination sampling needs a binary graph".into(),
        ));
    }
    // Blocks with B = 0 never carry edges, so f is not evaluated there.
    let mut keep = Matrix::zeros(n, k);
    for i in 0..n {
        for l in 0..k {
            let x = b[(labels.get(i), l)];
            if x > 0.0 {
                keep[(i, l)] = fns.get(i).eval(x)?;
            }
        }
    }
    let prob = DMatrix::from_fn(n, n, |i, j| keep[(i, labels.get(j))]);
    let mask = sample_bernoulli(&prob, seed, purpose::NOMINATION)?;
    DirectedGraph::new(a.weights().component_mul(mask.weights()))
}

/// Binary NSBM draw with `P(A[i, j] = 1) = theta_i * B[c_i, c_j]^lambda_i`.
pub fn sample_nsbm(params: &NsbmParams, seed: u64) -> Result<DirectedGraph> {
    let prob = expected_matrix(params)?;
    if let Some((idx, &value)) = prob.iter().enumerate().find(|(_, &p)| p > 1.0) {
        let n = prob.nrows();
        return Err(Error::ProbabilityOverflow {
            row: idx % n,
            col: idx / n,
            value,
        });
    }
    sample_bernoulli(&prob, seed, purpose::NSBM)
}

/// Weighted NSBM draw with Poisson edge weights of mean
/// `theta_i * B[c_i, c_j]^lambda_i`.
pub fn sample_nsbm_poisson(params: &NsbmParams, seed: u64) -> Result<DirectedGraph> {
    let means = expected_matrix(params)?;
    sample_poisson(&means, seed)
}

fn default_theta_low_factor() -> f64 {
    0.05
}

fn default_avg_degree() -> f64 {
    50.0
}

fn default_avg_rowsum() -> f64 {
    250.0
}

/// Simulation design: `n` nodes assigned uniformly to `K` communities,
/// `B` with unit diagonal and `beta` elsewhere, `log(lambda)` uniform on
/// `(-t, t)`, and `theta` a two-point mixture `{c, theta_low_factor * c}`
/// with `c` calibrated to the density target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub beta: f64,
    pub t: f64,
    #[serde(default = "default_theta_low_factor")]
    pub theta_low_factor: f64,
    /// Mean out-degree target for binary designs.
    #[serde(default = "default_avg_degree")]
    pub target_avg_degree: f64,
    /// Mean row-sum target for Poisson designs.
    #[serde(default = "default_avg_rowsum")]
    pub target_avg_rowsum: f64,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default)]
    pub seed: u64,
    /// Replaces the constant-`beta` block matrix when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_matrix: Option<Vec<Vec<f64>>>,
    /// Per-community multiplier applied to the two-point `theta` levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub community_theta_scale: Option<Vec<f64>>,
}

impl SimDesign {
    /// The binary design with the given size, signal and heterogeneity.
    pub fn binary(n: usize, k: usize, beta: f64, t: f64) -> Self {
        Self {
            n,
            k,
            beta,
            t,
            theta_low_factor: default_theta_low_factor(),
            target_avg_degree: default_avg_degree(),
            target_avg_rowsum: default_avg_rowsum(),
            weighted: false,
            seed: 0,
            block_matrix: None,
            community_theta_scale: None,
        }
    }

    pub fn poisson(n: usize, k: usize, beta: f64, t: f64) -> Self {
        Self {
            weighted: true,
            ..Self::binary(n, k, beta, t)
        }
    }

    /// Replaces the calibration target of the active edge model.
    pub fn with_target(mut self, target: f64) -> Self {
        if self.weighted {
            self.target_avg_rowsum = target;
        } else {
            self.target_avg_degree = target;
        }
        self
    }

    pub fn target(&self) -> f64 {
        if self.weighted {
            self.target_avg_rowsum
        } else {
            self.target_avg_degree
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= K <= n, got K = {} and n = {}",
                self.k, self.n
            )));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidParameter(format!("t must be >= 0, got {}", self.t)));
        }
        if self.block_matrix.is_none() && !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.theta_low_factor > 0.0) {
            return Err(Error::InvalidParameter("theta_low_factor must be positive".into()));
        }
        if !(self.target() > 0.0 && self.target().is_finite()) {
            return Err(Error::InvalidParameter("density target must be positive".into()));
        }
        if let Some(scale) = &self.community_theta_scale {
            if scale.len() != self.k || scale.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::InvalidParameter(
                    "community_theta_scale needs K positive entries".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn block_matrix(&self) -> Result<Matrix> {
        match &self.block_matrix {
            Some(rows) => {
                if rows.len() != self.k || rows.iter().any(|r| r.len() != self.k) {
                    return Err(Error::Dimension(format!(
                        "block_matrix must be {0} x {0}",
                        self.k
                    )));
                }
                Ok(DMatrix::from_fn(self.k, self.k, |r, c| rows[r][c]))
            }
            None => Ok(DMatrix::from_fn(self.k, self.k, |r, c| {
                if r == c {
                    1.0
                } else {
                    self.beta
                }
            })),
        }
    }
}

const MAX_LABEL_DRAWS: usize = 1000;

/// Draws one parameter set from `design`: labels, `lambda` rescaled to unit
/// mean within each realised community, and `theta` calibrated in closed form
/// so the expected mean out-degree (or row sum) hits the target exactly.
pub fn make_sim_params(design: &SimDesign, seed: u64) -> Result<NsbmParams> {
    design.validate()?;
    let (n, k) = (design.n, design.k);
    let b = design.block_matrix()?;
    let mut rng = row_stream(seed, purpose::PARAMS, 0);

    let mut labels = Vec::with_capacity(n);
    for attempt in 0.. {
        labels = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut seen = vec![false; k];
        labels.iter().for_each(|&c| seen[c] = true);
        if seen.iter().all(|&s| s) {
            break;
        }
        if attempt + 1 == MAX_LABEL_DRAWS {
            return Err(Error::InvalidParameter(format!(
                "could not populate all {k} communities with {n} nodes"
            )));
        }
    }
    let labels = LabelVector::new(labels, k)?;

    let mut lambda: Vec<f64> = (0..n)
        .map(|_| {
            if design.t == 0.0 {
                1.0
            } else {
                rng.random_range(-design.t..design.t).exp()
            }
        })
        .collect();
    for members in labels.members() {
        let total: f64 = members.iter().map(|&i| lambda[i]).sum();
        let scale = members.len() as f64 / total;
        for &i in &members {
            lambda[i] *= scale;
        }
    }

    let theta_bar: Vec<f64> = (0..n)
        .map(|i| {
            let level = if rng.random_bool(0.5) {
                1.0
            } else {
                design.theta_low_factor
            };
            let scale = design
                .community_theta_scale
                .as_ref()
                .map_or(1.0, |s| s[labels.get(i)]);
            level * scale
        })
        .collect();

    // Expected total with c = 1; the target is linear in c.
    let sizes = labels.sizes();
    let mut total = 0.0;
    for i in 0..n {
        let ci = labels.get(i);
        let mut row = 0.0;
        for l in 0..k {
            let pairs = sizes[l] - usize::from(l == ci);
            if pairs > 0 {
                let p = crate::model::block_power(b[(ci, l)], lambda[i]).ok_or(
                    Error::UndefinedPower {
                        node: i,
                        exponent: lambda[i],
                    },
                )?;
                row += pairs as f64 * p;
            }
        }
        total += theta_bar[i] * row;
    }
    if !(total > 0.0) {
        return Err(Error::Numerical("design has zero expected density".into()));
    }
    let c = design.target() * n as f64 / total;
    let theta: Vec<f64> = theta_bar.iter().map(|&t| c * t).collect();
    let params = NsbmParams::new(labels, b, theta, lambda, c)?;

    if !design.weighted {
        let prob = expected_matrix(&params)?;
        if let Some((idx, &value)) = prob.iter().enumerate().find(|(_, &p)| p > 1.0) {
            return Err(Error::ProbabilityOverflow {
                row: idx % n,
                col: idx / n,
                value,
            });
        }
    }
    Ok(params)
}

/// Samples a graph from `params` with the edge law the design calls for.
pub fn sample_design_graph(design: &SimDesign, params: &NsbmParams, seed: u64) -> Result<DirectedGraph> {
    if design.weighted {
        sample_nsbm_poisson(params, seed)
    } else {
        sample_nsbm(params, seed)
    }
}
