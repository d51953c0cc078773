//! Clustering accuracy under the best label permutation, and relative
//! error of probability-matrix estimates.

use pathfinding::prelude::{kuhn_munkres, Matrix as Weights};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LabelVector, Matrix};

/// Largest K solved by enumerating all K! permutations.
pub const EXHAUSTIVE_MAX_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Misclustering {
    /// Fraction of nodes whose mapped label differs from the truth.
    pub rate: f64,
    /// `sum_k |G_k \ Ghat_k| / n_k` over non-empty true communities.
    pub per_community: f64,
    /// `permutation[p]` is the true community matched to predicted label `p`.
    pub permutation: Vec<usize>,
}

impl Misclustering {
    pub fn accuracy(&self) -> f64 {
        1.0 - self.rate
    }
}

/// `confusion[p][t]` counts nodes with predicted label `p` and true label `t`.
pub fn confusion_matrix(pred: &LabelVector, truth: &LabelVector) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "predicted labels cover {} nodes, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    let k = pred.k().max(truth.k());
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        confusion[p][t] += 1;
    }
    Ok(confusion)
}

fn matched(confusion: &[Vec<usize>], perm: &[usize]) -> usize {
    perm.iter().enumerate().map(|(p, &t)| confusion[p][t]).sum()
}

/// Best permutation by enumerating all of them (Heap's algorithm). Ties keep
/// the first permutation found.
pub fn best_permutation_exhaustive(confusion: &[Vec<usize>]) -> Vec<usize> {
    let k = confusion.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_score = matched(confusion, &perm);
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let score = matched(confusion, &perm);
            if score > best_score {
                best_score = score;
                best.clone_from(&perm);
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Best permutation by solving the assignment problem on the confusion
/// matrix (Hungarian algorithm).
pub fn best_permutation_assignment(confusion: &[Vec<usize>]) -> Vec<usize> {
    let k = confusion.len();
    if k == 0 {
        return Vec::new();
    }
    let weights = Weights::from_rows(
        confusion
            .iter()
            .map(|row| row.iter().map(|&c| c as i64).collect::<Vec<_>>()),
    )
    .expect("confusion matrix is square");
    kuhn_munkres(&weights).1
}

/// Misclustering rate under the best permutation of predicted labels.
pub fn misclustering(pred: &LabelVector, truth: &LabelVector) -> Result<Misclustering> {
    let confusion = confusion_matrix(pred, truth)?;
    let permutation = if confusion.len() <= EXHAUSTIVE_MAX_K {
        best_permutation_exhaustive(&confusion)
    } else {
        best_permutation_assignment(&confusion)
    };
    Ok(score_permutation(&confusion, permutation, truth))
}

fn score_permutation(
    confusion: &[Vec<usize>],
    permutation: Vec<usize>,
    truth: &LabelVector,
) -> Misclustering {
    let n = truth.len();
    let rate = if n == 0 {
        0.0
    } else {
        1.0 - matched(confusion, &permutation) as f64 / n as f64
    };
    let sizes = truth.sizes();
    let mut hits = vec![0usize; confusion.len()];
    for (p, &t) in permutation.iter().enumerate() {
        hits[t] = confusion[p][t];
    }
    let per_community = sizes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0)
        .map(|(t, &s)| (s - hits[t]) as f64 / s as f64)
        .sum();
    Misclustering {
        rate,
        per_community,
        permutation,
    }
}

/// `||P_hat - P||_F^2 / ||P||_F^2` over off-diagonal entries.
pub fn relative_frobenius(p_hat: &Matrix, p_true: &Matrix) -> Result<f64> {
    if p_hat.shape() != p_true.shape() {
        return Err(Error::Dimension(format!(
            "estimate is {:?} but truth is {:?}",
            p_hat.shape(),
            p_true.shape()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..p_true.ncols() {
        for i in 0..p_true.nrows() {
            if i == j {
                continue;
            }
            let diff = p_hat[(i, j)] - p_true[(i, j)];
            num += diff * diff;
            den += p_true[(i, j)] * p_true[(i, j)];
        }
    }
    if den == 0.0 {
        return Err(Error::Numerical(
            "reference matrix has zero Frobenius norm".into(),
        ));
    }
    Ok(num / den)
}
