//! Spectral community detection for directed graphs.
//!
//! The proposed clusterers embed each node by its row of the rank-K right
//! singular matrix `V`, which depends only on the community of the node
//! whatever the nodes' nomination behaviour. Baselines embed by the left
//! singular vectors or by the eigenvectors of a symmetrised graph.

mod diagnostics;
mod kmeans;
mod mst;
mod svd;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use diagnostics::{
    right_embedding_geometry, theory_diagnostics, CentreDistance, DiagnosticsReport,
    EmbeddingGeometry,
};
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use mst::{minimum_spanning_tree, mst_clusters, TreeEdge};
pub use svd::{truncated_svd, truncated_svd_with, SvdFactors, SvdPath, SPARSE_DENSITY_THRESHOLD};

use crate::error::{Error, Result};
use crate::model::{DirectedGraph, LabelVector, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    /// K-means on rows of the right singular vectors.
    RightSc,
    /// Minimum spanning tree cut on rows of the right singular vectors.
    RightSmst,
    LeftSc,
    /// K-means on row-normalised left singular vectors.
    LeftSsc,
    SymmetricSc,
    SymmetricSsc,
}

impl ClusterMethod {
    pub const ALL: [ClusterMethod; 6] = [
        ClusterMethod::RightSc,
        ClusterMethod::RightSmst,
        ClusterMethod::LeftSc,
        ClusterMethod::LeftSsc,
        ClusterMethod::SymmetricSc,
        ClusterMethod::SymmetricSsc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClusterMethod::RightSc => "right_sc",
            ClusterMethod::RightSmst => "right_smst",
            ClusterMethod::LeftSc => "left_sc",
            ClusterMethod::LeftSsc => "left_ssc",
            ClusterMethod::SymmetricSc => "symmetric_sc",
            ClusterMethod::SymmetricSsc => "symmetric_ssc",
        }
    }
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClusterMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown clustering method `{s}`")))
    }
}

/// How a directed weighted graph is turned into an undirected one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    /// `max(A_ij, A_ji)`: an edge in either direction.
    #[default]
    Max,
    /// `A_ij + A_ji`.
    Sum,
}

pub fn symmetrize(m: &Matrix, rule: Symmetrization) -> Matrix {
    let t = m.transpose();
    match rule {
        Symmetrization::Max => m.zip_map(&t, f64::max),
        Symmetrization::Sum => m + t,
    }
}

/// Scales every row to unit length; zero rows stay at the origin.
pub fn normalize_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        let norm = out.row(i).norm();
        if norm > 0.0 {
            out.row_mut(i).unscale_mut(norm);
        }
    }
    out
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "K = {k} must lie in 1..={n}"
        )));
    }
    Ok(())
}

fn kmeans_labels(points: &Matrix, k: usize, cfg: &KMeansConfig) -> Result<LabelVector> {
    let res = kmeans(points, k, cfg)?;
    LabelVector::new(res.labels, k)
}

/// Rows of the rank-K right singular matrix of `m`.
pub fn right_embedding(m: &Matrix, k: usize) -> Result<Matrix> {
    Ok(truncated_svd(m, k)?.v)
}

/// Right SC on an arbitrary square matrix (a graph or a probability matrix).
pub fn right_sc_matrix(m: &Matrix, k: usize, cfg: &KMeansConfig) -> Result<LabelVector> {
    check_k(m.nrows(), k)?;
    kmeans_labels(&right_embedding(m, k)?, k, cfg)
}

pub fn right_smst_matrix(m: &Matrix, k: usize) -> Result<LabelVector> {
    check_k(m.nrows(), k)?;
    let labels = mst_clusters(&right_embedding(m, k)?, k)?;
    LabelVector::new(labels, k)
}

/// Right SC: K-means on the rows of the rank-K right singular vectors.
pub fn right_sc(a: &DirectedGraph, k: usize, cfg: &KMeansConfig) -> Result<LabelVector> {
    right_sc_matrix(a.weights(), k, cfg)
}

/// Right SMST: cut the `K - 1` heaviest edges of the minimum spanning tree
/// over the rows of the rank-K right singular vectors.
pub fn right_smst(a: &DirectedGraph, k: usize) -> Result<LabelVector> {
    right_smst_matrix(a.weights(), k)
}

/// Baseline clusterings, with max-symmetrisation for the symmetric methods.
pub fn baseline_cluster(
    a: &DirectedGraph,
    k: usize,
    method: ClusterMethod,
    cfg: &KMeansConfig,
) -> Result<LabelVector> {
    baseline_cluster_with(a, k, method, cfg, Symmetrization::Max)
}

pub fn baseline_cluster_with(
    a: &DirectedGraph,
    k: usize,
    method: ClusterMethod,
    cfg: &KMeansConfig,
    rule: Symmetrization,
) -> Result<LabelVector> {
    let m = a.weights();
    check_k(m.nrows(), k)?;
    match method {
        ClusterMethod::LeftSc => kmeans_labels(&truncated_svd(m, k)?.u, k, cfg),
        ClusterMethod::LeftSsc => kmeans_labels(&normalize_rows(&truncated_svd(m, k)?.u), k, cfg),
        ClusterMethod::SymmetricSc | ClusterMethod::SymmetricSsc => {
            // singular vectors of a symmetric matrix are its eigenvectors
            // ordered by eigenvalue magnitude
            let embedding = truncated_svd(&symmetrize(m, rule), k)?.u;
            if method == ClusterMethod::SymmetricSsc {
                kmeans_labels(&normalize_rows(&embedding), k, cfg)
            } else {
                kmeans_labels(&embedding, k, cfg)
            }
        }
        ClusterMethod::RightSc => right_sc_matrix(m, k, cfg),
        ClusterMethod::RightSmst => right_smst_matrix(m, k),
    }
}

/// Runs any clustering method by name.
pub fn cluster(
    a: &DirectedGraph,
    k: usize,
    method: ClusterMethod,
    cfg: &KMeansConfig,
) -> Result<LabelVector> {
    baseline_cluster(a, k, method, cfg)
}
