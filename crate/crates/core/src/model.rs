//! Domain types shared by every stage: directed graphs, community labels,
//! NSBM parameters, nomination functions and the exact expected matrices
//! they induce.
//!
//! Node and community indices are 0-based inside the library. The 1-based
//! convention only appears at file boundaries (see [`crate::pipeline`]).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Serde adapter writing a matrix as a list of rows.
pub mod rows {
    use super::Matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

/// Square, non-negative weighted adjacency matrix without self-loops.
///
/// Entry `(i, j)` is the weight of the edge `i -> j`. Binary graphs hold
/// only 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    weights: Matrix,
}

impl DirectedGraph {
    pub fn new(weights: Matrix) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::Dimension(format!(
                "adjacency must be square, got {} x {}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for j in 0..weights.ncols() {
            for i in 0..weights.nrows() {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Range(format!(
                        "edge weight at ({i}, {j}) must be finite and non-negative, got {w}"
                    )));
                }
                if i == j && w != 0.0 {
                    return Err(Error::Range(format!("self-loop at node {i}")));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from `(source, target, weight)` triples. Repeated pairs
    /// are summed; self-loops are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut weights = Matrix::zeros(n, n);
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!(
                    "edge ({i}, {j}) out of bounds for {n} nodes"
                )));
            }
            weights[(i, j)] += w;
        }
        Self::new(weights)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn into_weights(self) -> Matrix {
        self.weights
    }

    pub fn is_binary(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0 || w == 1.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.weights == self.weights.transpose()
    }

    /// Number of nonzero entries.
    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    /// Fraction of nonzero off-diagonal entries.
    pub fn density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (n * (n - 1)) as f64
    }

    /// Count of nonzero entries in each row.
    pub fn out_degrees(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| self.weights.row(i).iter().filter(|&&w| w != 0.0).count())
            .collect()
    }

    /// Count of nonzero entries in each column.
    pub fn in_degrees(&self) -> Vec<usize> {
        (0..self.n())
            .map(|j| self.weights.column(j).iter().filter(|&&w| w != 0.0).count())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.weights.row(i).sum()).collect()
    }

    /// Relabels nodes so that new node `a` is old node `order[a]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = order.len();
        let weights = Matrix::from_fn(n, n, |a, b| self.weights[(order[a], order[b])]);
        Self { weights }
    }

    /// Induced subgraph on `keep`, in the given order.
    pub fn subgraph(&self, keep: &[usize]) -> Self {
        self.permuted(keep)
    }
}

/// Community assignment of every node, with `k` possible communities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    /// `labels` are 0-based and must be below `k`.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(Error::Range(format!(
                "label {c} of node {i} is outside 0..{k}"
            )));
        }
        Ok(Self { labels, k })
    }

    /// Builds labels from 1-based community numbers; K is the largest label.
    pub fn from_one_based(labels: &[usize]) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&c| c == 0) {
            return Err(Error::Range(format!("node {i} has label 0; labels are 1-based")));
        }
        let k = labels.iter().copied().max().unwrap_or(0);
        Self::new(labels.iter().map(|&c| c - 1).collect(), k)
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|&c| c + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Nodes of each community, in increasing node order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (i, &c) in self.labels.iter().enumerate() {
            groups[c].push(i);
        }
        groups
    }

    /// Indices of communities with no members.
    pub fn empty_communities(&self) -> Vec<usize> {
        self.sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn require_nonempty(&self) -> Result<()> {
        let empty = self.empty_communities();
        if empty.is_empty() {
            Ok(())
        } else {
            Err(Error::EmptyCluster {
                k: self.k,
                empty: empty.len(),
            })
        }
    }

    /// The n x K indicator matrix Z with Z[i, c_i] = 1.
    pub fn membership_matrix(&self) -> Matrix {
        let mut z = Matrix::zeros(self.len(), self.k);
        for (i, &c) in self.labels.iter().enumerate() {
            z[(i, c)] = 1.0;
        }
        z
    }

    /// Labels of the reordered node set (new node `a` is old node `order[a]`).
    pub fn permuted_nodes(&self, order: &[usize]) -> Self {
        Self {
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }

    /// Renames community `c` to `mapping[c]`.
    pub fn relabeled(&self, mapping: &[usize]) -> Result<Self> {
        if mapping.len() != self.k {
            return Err(Error::Dimension(format!(
                "relabel map has {} entries for K = {}",
                mapping.len(),
                self.k
            )));
        }
        Self::new(self.labels.iter().map(|&c| mapping[c]).collect(), self.k)
    }
}

/// `base^exponent` with `0^0 = 1` and `0^positive = 0`. Zero raised to a
/// negative exponent is undefined and returns `None`.
pub fn block_power(base: f64, exponent: f64) -> Option<f64> {
    if base == 0.0 {
        if exponent == 0.0 {
            Some(1.0)
        } else if exponent > 0.0 {
            Some(0.0)
        } else {
            None
        }
    } else {
        Some(base.powf(exponent))
    }
}

/// Parameters of the nomination stochastic block model: edge `i -> j` is
/// observed with probability `theta_i * B[c_i, c_j]^lambda_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsbmParams {
    pub labels: LabelVector,
    #[serde(with = "rows")]
    pub b: Matrix,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Density scale; `theta` already includes it.
    pub rho: f64,
}

impl NsbmParams {
    /// Checks shapes and ranges only. Identifiability is reported separately
    /// by [`validate_nsbm_params`].
    pub fn new(
        labels: LabelVector,
        b: Matrix,
        theta: Vec<f64>,
        lambda: Vec<f64>,
        rho: f64,
    ) -> Result<Self> {
        let params = Self {
            labels,
            b,
            theta,
            lambda,
            rho,
        };
        params.check_structure()?;
        Ok(params)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.labels.k()
    }

    fn check_structure(&self) -> Result<()> {
        let (n, k) = (self.n(), self.k());
        if self.b.nrows() != k || self.b.ncols() != k {
            return Err(Error::Dimension(format!(
                "B is {} x {} but K = {k}",
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        if self.theta.len() != n || self.lambda.len() != n {
            return Err(Error::Dimension(format!(
                "theta has {} and lambda {} entries for {n} nodes",
                self.theta.len(),
                self.lambda.len()
            )));
        }
        if let Some(v) = self.b.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Range(format!("B entry {v} outside [0, 1]")));
        }
        if self.theta.iter().chain(&self.lambda).any(|v| !v.is_finite()) {
            return Err(Error::Range("theta and lambda must be finite".into()));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Range(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }

    /// `theta_i * B[c_i, l]^lambda_i`, the expected weight from node `i` to
    /// any node of community `l`.
    pub fn rate(&self, node: usize, community: usize) -> Result<f64> {
        let base = self.b[(self.labels.get(node), community)];
        let exponent = self.lambda[node];
        block_power(base, exponent)
            .map(|p| self.theta[node] * p)
            .ok_or(Error::UndefinedPower { node, exponent })
    }

    /// Expected connection strength between communities.
    pub fn connection_strength(&self) -> Result<Matrix> {
        connection_strength(&self.theta, &self.lambda, &self.b, &self.labels)
    }
}

/// One failed identifiability condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Condition 1: `B[k, k]` must equal 1.
    DiagonalNotOne { community: usize, value: f64 },
    /// Condition 2: some `l != k` must have `B[k, l]` neither 0 nor `B[k, k]`.
    NoInformativeBlock { community: usize },
    /// Condition 3: every `theta_i` must be positive.
    NonPositiveTheta { node: usize, value: f64 },
    /// Condition 4: the mean of `lambda` over each community must be 1.
    LambdaMean { community: usize, mean: f64 },
}

impl Violation {
    pub fn condition(&self) -> u8 {
        match self {
            Violation::DiagonalNotOne { .. } => 1,
            Violation::NoInformativeBlock { .. } => 2,
            Violation::NonPositiveTheta { .. } => 3,
            Violation::LambdaMean { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationWarning {
    RankDeficientB { rank: usize, k: usize },
    EmptyCommunity { community: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn is_identifiable(&self) -> bool {
        self.violations.is_empty()
    }
}

const LAMBDA_MEAN_TOL: f64 = 1e-12;

/// Checks the four identifiability conditions of the NSBM and warns when
/// `B` is not full rank.
pub fn validate_nsbm_params(params: &NsbmParams) -> Result<ValidationReport> {
    params.check_structure()?;
    let k = params.k();
    let mut report = ValidationReport::default();

    for c in 0..k {
        let diag = params.b[(c, c)];
        if diag != 1.0 {
            report.violations.push(Violation::DiagonalNotOne {
                community: c,
                value: diag,
            });
        }
    }
    for c in 0..k {
        let diag = params.b[(c, c)];
        let informative = (0..k)
            .filter(|&l| l != c)
            .any(|l| params.b[(c, l)] != diag && params.b[(c, l)] != 0.0);
        if !informative {
            report
                .violations
                .push(Violation::NoInformativeBlock { community: c });
        }
    }
    for (i, &t) in params.theta.iter().enumerate() {
        if t <= 0.0 {
            report
                .violations
                .push(Violation::NonPositiveTheta { node: i, value: t });
        }
    }
    for (c, members) in params.labels.members().iter().enumerate() {
        if members.is_empty() {
            report
                .warnings
                .push(ValidationWarning::EmptyCommunity { community: c });
            continue;
        }
        let mean = members.iter().map(|&i| params.lambda[i]).sum::<f64>() / members.len() as f64;
        if (mean - 1.0).abs() > LAMBDA_MEAN_TOL {
            report
                .violations
                .push(Violation::LambdaMean { community: c, mean });
        }
    }

    let rank = numerical_rank(&params.b);
    if rank < k {
        report
            .warnings
            .push(ValidationWarning::RankDeficientB { rank, k });
    }
    Ok(report)
}

fn numerical_rank(m: &Matrix) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    let tol = max * 1e-12 * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Exact expected adjacency `P[i, j] = theta_i * B[c_i, c_j]^lambda_i` with
/// a zero diagonal.
pub fn expected_matrix(params: &NsbmParams) -> Result<Matrix> {
    Ok(expand_rates(&rate_table(params)?, &params.labels))
}

/// `expected_matrix` with the self-pair entries `theta_i` left on the
/// diagonal. This is the exact rank-K product `F Z^T`, whose singular
/// vectors carry the community structure without perturbation.
pub fn low_rank_expectation(params: &NsbmParams) -> Result<Matrix> {
    let rates = rate_table(params)?;
    let labels = &params.labels;
    let n = labels.len();
    Ok(Matrix::from_fn(n, n, |i, j| rates[(i, labels.get(j))]))
}

fn rate_table(params: &NsbmParams) -> Result<Matrix> {
    params.check_structure()?;
    let (n, k) = (params.n(), params.k());
    let mut rates = Matrix::zeros(n, k);
    for i in 0..n {
        for l in 0..k {
            rates[(i, l)] = params.rate(i, l)?;
        }
    }
    Ok(rates)
}

/// Expands a node-by-community rate table into the n x n matrix
/// `P[i, j] = rates[i, c_j]`, zero on the diagonal.
pub(crate) fn expand_rates(rates: &Matrix, labels: &LabelVector) -> Matrix {
    let n = labels.len();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            rates[(i, labels.get(j))]
        }
    })
}

/// A node's nomination function `f: [0, 1] -> [0, 1]`, the probability of
/// reporting an existing edge whose connection probability is `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NominationFn {
    /// Reports each edge with a fixed probability.
    Constant { rate: f64 },
    /// `theta * x^(lambda - 1)`, the NSBM family.
    Power { theta: f64, lambda: f64 },
    /// Egocentric sampling: reports everything or nothing.
    Egocentric { respondent: bool },
    /// Piecewise-linear interpolation through `(x, f(x))` knots sorted by
    /// `x`; constant beyond the end knots.
    Table { knots: Vec<(f64, f64)> },
}

impl NominationFn {
    /// Evaluates `f(x)`, failing when the value leaves `[0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let value = match self {
            NominationFn::Constant { rate } => *rate,
            NominationFn::Power { theta, lambda } => theta * x.powf(lambda - 1.0),
            NominationFn::Egocentric { respondent } => {
                if *respondent {
                    1.0
                } else {
                    0.0
                }
            }
            NominationFn::Table { knots } => interpolate(knots, x)?,
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Range(format!(
                "nomination function value {value} at x = {x} outside [0, 1]"
            )));
        }
        Ok(value)
    }

    /// `F(x) = x * f(x)`, the observed-edge probability. An absent edge
    /// (`x = 0`) is never reported, so `F(0) = 0` without evaluating `f`.
    pub fn observed(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(0.0);
        }
        Ok(x * self.eval(x)?)
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> Result<f64> {
    let (first, last) = match (knots.first(), knots.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::InvalidParameter("empty nomination table".into())),
    };
    if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidParameter(
            "nomination table knots must be strictly increasing in x".into(),
        ));
    }
    if x <= first.0 {
        return Ok(first.1);
    }
    if x >= last.0 {
        return Ok(last.1);
    }
    let idx = knots.partition_point(|&(kx, _)| kx <= x);
    let (x0, y0) = knots[idx - 1];
    let (x1, y1) = knots[idx];
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// One nomination function per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominationFunctionSet(pub Vec<NominationFn>);

impl NominationFunctionSet {
    pub fn uniform(n: usize, f: NominationFn) -> Self {
        Self(vec![f; n])
    }

    /// The NSBM functions `theta_i * x^(lambda_i - 1)`.
    pub fn power_family(theta: &[f64], lambda: &[f64]) -> Self {
        Self(
            theta
                .iter()
                .zip(lambda)
                .map(|(&theta, &lambda)| NominationFn::Power { theta, lambda })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, node: usize) -> &NominationFn {
        &self.0[node]
    }
}

pub(crate) fn check_block_matrix(b: &Matrix, labels: &LabelVector) -> Result<()> {
    let k = labels.k();
    if b.nrows() != k || b.ncols() != k {
        return Err(Error::Dimension(format!(
            "B is {} x {} but K = {k}",
            b.nrows(),
            b.ncols()
        )));
    }
    if let Some(v) = b.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("B entry {v} outside [0, 1]")));
    }
    Ok(())
}

/// Expected observed adjacency under the general nomination model:
/// `P[i, j] = B[c_i, c_j] * f_i(B[c_i, c_j])`, zero on the diagonal.
pub fn expected_matrix_general(
    b: &Matrix,
    labels: &LabelVector,
    fns: &NominationFunctionSet,
) -> Result<Matrix> {
    check_block_matrix(b, labels)?;
    let (n, k) = (labels.len(), labels.k());
    if fns.len() != n {
        return Err(Error::Dimension(format!(
            "{} nomination functions for {n} nodes",
            fns.len()
        )));
    }
    let mut rates = Matrix::zeros(n, k);
    for i in 0..n {
        let f = fns.get(i);
        for l in 0..k {
            rates[(i, l)] = f.observed(b[(labels.get(i), l)])?;
        }
    }
    Ok(expand_rates(&rates, labels))
}

/// Expected average edge weight from community `k` to community `l`:
/// the mean over `i` in `G_k` of `theta_i * B[k, l]^lambda_i`. Self-pairs are
/// excluded on the diagonal blocks, which leaves the same per-node mean.
pub fn connection_strength(
    theta: &[f64],
    lambda: &[f64],
    b: &Matrix,
    labels: &LabelVector,
) -> Result<Matrix> {
    let (n, k) = (labels.len(), labels.k());
    if theta.len() != n || lambda.len() != n || b.nrows() != k || b.ncols() != k {
        return Err(Error::Dimension(
            "connection strength inputs disagree in size".into(),
        ));
    }
    let members = labels.members();
    if let Some(c) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::Data(format!("community {} is empty", c + 1)));
    }
    let mut m = Matrix::zeros(k, k);
    for (c, group) in members.iter().enumerate() {
        for l in 0..k {
            let mut total = 0.0;
            for &i in group {
                let p = block_power(b[(c, l)], lambda[i]).ok_or(Error::UndefinedPower {
                    node: i,
                    exponent: lambda[i],
                })?;
                total += theta[i] * p;
            }
            m[(c, l)] = total / group.len() as f64;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn two_block() -> NsbmParams {
        NsbmParams::new(
            LabelVector::new(vec![0, 0, 1, 1], 2).unwrap(),
            dmatrix![1.0, 0.25; 0.5, 1.0],
            vec![0.8, 0.4, 0.6, 0.6],
            vec![2.0, 0.0, 1.0, 1.0],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn graph_rejects_self_loops_and_negative_weights() {
        assert!(DirectedGraph::new(dmatrix![1.0, 0.0; 0.0, 0.0]).is_err());
        assert!(DirectedGraph::new(dmatrix![0.0, -1.0; 0.0, 0.0]).is_err());
        assert!(DirectedGraph::new(Matrix::zeros(2, 3)).is_err());
        let g = DirectedGraph::from_edges(3, [(0, 1, 1.0), (0, 1, 1.0), (2, 0, 1.0)]).unwrap();
        assert_eq!(g.weights()[(0, 1)], 2.0);
        assert_eq!(g.out_degrees(), vec![1, 0, 1]);
        assert_eq!(g.in_degrees(), vec![1, 1, 0]);
        assert!(!g.is_binary());
    }

    #[test]
    fn membership_matrix_has_one_entry_per_row() {
        let labels = LabelVector::from_one_based(&[1, 2, 2, 3]).unwrap();
        assert_eq!(labels.k(), 3);
        assert_eq!(labels.sizes(), vec![1, 2, 1]);
        let z = labels.membership_matrix();
        for i in 0..4 {
            assert_eq!(z.row(i).sum(), 1.0);
        }
        assert!(LabelVector::from_one_based(&[0, 1]).is_err());
        assert!(LabelVector::new(vec![0, 2], 2).is_err());
    }

    #[test]
    fn identifiable_two_block_params() {
        let p = NsbmParams::new(
            LabelVector::new(vec![0, 0, 1, 1], 2).unwrap(),
            dmatrix![1.0, 0.5; 0.3, 1.0],
            vec![0.5; 4],
            vec![1.5, 0.5, 1.0, 1.0],
            0.5,
        )
        .unwrap();
        let report = validate_nsbm_params(&p).unwrap();
        assert!(report.is_identifiable(), "{report:?}");
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn diagonal_not_one_violates_condition_one() {
        let mut p = two_block();
        p.b = dmatrix![0.9, 0.5; 0.3, 1.0];
        let report = validate_nsbm_params(&p).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].condition(), 1);
    }

    #[test]
    fn uninformative_row_violates_condition_two() {
        let mut p = two_block();
        p.b = dmatrix![1.0, 1.0; 0.3, 1.0];
        let report = validate_nsbm_params(&p).unwrap();
        assert_eq!(
            report.violations,
            vec![Violation::NoInformativeBlock { community: 0 }]
        );
        // rank([[1,1],[0.3,1]]) = 2, no warning
        assert!(report.warnings.is_empty());

        p.b = dmatrix![1.0, 0.0; 0.3, 1.0];
        let report = validate_nsbm_params(&p).unwrap();
        assert_eq!(
            report.violations,
            vec![Violation::NoInformativeBlock { community: 0 }]
        );
    }

    #[test]
    fn theta_and_lambda_conditions() {
        let mut p = two_block();
        p.theta[1] = 0.0;
        p.lambda = vec![1.0, 1.5, 1.0, 1.0];
        let report = validate_nsbm_params(&p).unwrap();
        let conditions: Vec<u8> = report.violations.iter().map(Violation::condition).collect();
        assert_eq!(conditions, vec![3, 4]);
    }

    #[test]
    fn rank_deficient_b_warns() {
        let singular = NsbmParams::new(
            LabelVector::new(vec![0, 1], 2).unwrap(),
            dmatrix![1.0, 1.0; 1.0, 1.0],
            vec![0.5; 2],
            vec![1.0; 2],
            0.5,
        )
        .unwrap();
        let report = validate_nsbm_params(&singular).unwrap();
        assert!(report
            .warnings
            .contains(&ValidationWarning::RankDeficientB { rank: 1, k: 2 }));
    }

    #[test]
    fn structural_errors_are_reported() {
        let labels = LabelVector::new(vec![0, 1], 2).unwrap();
        assert!(matches!(
            NsbmParams::new(labels.clone(), Matrix::identity(3, 3), vec![0.5; 2], vec![1.0; 2], 1.0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            NsbmParams::new(labels, Matrix::identity(2, 2), vec![0.5; 3], vec![1.0; 2], 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn expected_matrix_hand_values() {
        let p = two_block();
        let m = expected_matrix(&p).unwrap();
        // P[0, 2] = 0.8 * 0.25^2 and P[1, 2] = 0.4 * 0.25^0
        assert!((m[(0, 2)] - 0.05).abs() < 1e-15);
        assert!((m[(1, 2)] - 0.4).abs() < 1e-15);
        for i in 0..4 {
            assert_eq!(m[(i, i)], 0.0);
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let (ci, cj) = (p.labels.get(i), p.labels.get(j));
                let scalar = p.theta[i] * p.b[(ci, cj)].powf(p.lambda[i]);
                assert!((m[(i, j)] - scalar).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn expected_matrix_single_block() {
        let p = NsbmParams::new(
            LabelVector::new(vec![0; 5], 1).unwrap(),
            dmatrix![1.0],
            vec![0.3; 5],
            vec![0.2, 1.8, 1.0, 0.5, 1.5],
            0.3,
        )
        .unwrap();
        let m = expected_matrix(&p).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m[(i, j)], if i == j { 0.0 } else { 0.3 });
            }
        }
    }

    #[test]
    fn zero_block_power_conventions() {
        assert_eq!(block_power(0.0, 0.0), Some(1.0));
        assert_eq!(block_power(0.0, 2.0), Some(0.0));
        assert_eq!(block_power(0.0, -0.5), None);
        let p = NsbmParams::new(
            LabelVector::new(vec![0, 1], 2).unwrap(),
            dmatrix![1.0, 0.0; 0.5, 1.0],
            vec![0.5, 0.5],
            vec![-1.0, 1.0],
            0.5,
        )
        .unwrap();
        assert!(matches!(
            expected_matrix(&p),
            Err(Error::UndefinedPower { node: 0, .. })
        ));
    }

    #[test]
    fn identity_nomination_expands_b() {
        let labels = LabelVector::new(vec![0, 1, 1, 0], 2).unwrap();
        let b = dmatrix![0.9, 0.2; 0.4, 0.7];
        let fns = NominationFunctionSet::uniform(4, NominationFn::Constant { rate: 1.0 });
        let m = expected_matrix_general(&b, &labels, &fns).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.0 } else { b[(labels.get(i), labels.get(j))] };
                assert_eq!(m[(i, j)], want);
            }
        }
    }

    #[test]
    fn egocentric_non_respondent_has_empty_row() {
        let labels = LabelVector::new(vec![0, 1, 1], 2).unwrap();
        let b = dmatrix![0.9, 0.2; 0.4, 0.7];
        let mut fns = NominationFunctionSet::uniform(3, NominationFn::Egocentric { respondent: true });
        fns.0[1] = NominationFn::Egocentric { respondent: false };
        let m = expected_matrix_general(&b, &labels, &fns).unwrap();
        assert!(m.row(1).iter().all(|&v| v == 0.0));
        assert_eq!(m[(0, 1)], 0.2);
    }

    #[test]
    fn power_family_matches_nsbm_expectation() {
        let p = NsbmParams::new(
            LabelVector::new(vec![0, 0, 1, 1, 2, 2], 3).unwrap(),
            dmatrix![1.0, 0.5, 0.25; 0.6, 1.0, 0.3; 0.2, 0.7, 1.0],
            vec![0.2, 0.1, 0.15, 0.12, 0.18, 0.1],
            vec![1.2, 0.8, 1.1, 0.9, 1.0, 1.0],
            0.2,
        )
        .unwrap();
        let fns = NominationFunctionSet::power_family(&p.theta, &p.lambda);
        let general = expected_matrix_general(&p.b, &p.labels, &fns).unwrap();
        let nsbm = expected_matrix(&p).unwrap();
        assert!((general - nsbm).amax() < 1e-14);
    }

    #[test]
    fn out_of_range_nomination_function_is_an_error() {
        let labels = LabelVector::new(vec![0, 1], 2).unwrap();
        let b = dmatrix![1.0, 0.2; 0.2, 1.0];
        let fns = NominationFunctionSet::uniform(2, NominationFn::Power { theta: 0.5, lambda: 0.5 });
        assert!(matches!(
            expected_matrix_general(&b, &labels, &fns),
            Err(Error::Range(_))
        ));
        let bad = NominationFunctionSet::uniform(2, NominationFn::Constant { rate: 1.5 });
        assert!(expected_matrix_general(&b, &labels, &bad).is_err());
    }

    #[test]
    fn table_nomination_interpolates() {
        let f = NominationFn::Table {
            knots: vec![(0.0, 0.2), (0.5, 0.6), (1.0, 1.0)],
        };
        assert!((f.eval(0.25).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(f.eval(1.0).unwrap(), 1.0);
        assert_eq!(f.eval(0.0).unwrap(), 0.2);
        let bad = NominationFn::Table {
            knots: vec![(0.5, 0.2), (0.5, 0.6)],
        };
        assert!(bad.eval(0.3).is_err());
    }

    #[test]
    fn connection_strength_with_unit_lambda() {
        let p = NsbmParams::new(
            LabelVector::new(vec![0, 0, 1, 1, 1], 2).unwrap(),
            dmatrix![1.0, 0.4; 0.3, 1.0],
            vec![0.2, 0.4, 0.1, 0.2, 0.6],
            vec![1.0; 5],
            0.2,
        )
        .unwrap();
        let m = p.connection_strength().unwrap();
        let means = [0.3, 0.3];
        for c in 0..2 {
            for l in 0..2 {
                assert!((m[(c, l)] - means[c] * p.b[(c, l)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn connection_strength_matches_block_averages_of_expected_matrix() {
        let p = NsbmParams::new(
            LabelVector::new(vec![0, 1, 0, 2, 1, 2, 0], 3).unwrap(),
            dmatrix![1.0, 0.5, 0.25; 0.6, 1.0, 0.3; 0.2, 0.7, 1.0],
            vec![0.2, 0.1, 0.15, 0.12, 0.18, 0.1, 0.3],
            vec![1.4, 0.8, 0.9, 0.5, 1.2, 1.5, 0.7],
            0.2,
        )
        .unwrap();
        let m = p.connection_strength().unwrap();
        let pt = expected_matrix(&p).unwrap();
        let members = p.labels.members();
        for c in 0..3 {
            for l in 0..3 {
                let mut sum = 0.0;
                let mut pairs = 0usize;
                for &i in &members[c] {
                    for &j in &members[l] {
                        if i != j {
                            sum += pt[(i, j)];
                            pairs += 1;
                        }
                    }
                }
                assert!((m[(c, l)] - sum / pairs as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn connection_strength_rejects_empty_community() {
        let labels = LabelVector::new(vec![0, 0], 2).unwrap();
        let r = connection_strength(&[0.5, 0.5], &[1.0, 1.0], &Matrix::identity(2, 2), &labels);
        assert!(r.is_err());
    }

    #[test]
    fn low_rank_expectation_has_rank_k() {
        let labels = LabelVector::new((0..30).map(|i| i % 3).collect(), 3).unwrap();
        let theta: Vec<f64> = (0..30).map(|i| 0.2 + 0.02 * i as f64).collect();
        let lambda: Vec<f64> = (0..30).map(|i| [0.5, 1.0, 1.5][(i / 3) % 3]).collect();
        let b = dmatrix![1.0, 0.4, 0.2; 0.3, 1.0, 0.5; 0.6, 0.1, 1.0];
        let params = NsbmParams::new(labels, b, theta, lambda, 1.0).unwrap();
        let full = low_rank_expectation(&params).unwrap();
        let sv = full.clone().singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[2] > 1e-3 && sv[3] < 1e-10);
        let zeroed = expected_matrix(&params).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                let want = if i == j { 0.0 } else { full[(i, j)] };
                assert_eq!(zeroed[(i, j)], want);
            }
        }
    }
}
