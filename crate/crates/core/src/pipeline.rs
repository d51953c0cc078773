//! End-to-end analysis of an observed network: edge-list ingestion, degree
//! filtering and weight capping, community detection, estimation, and the
//! JSON/CSV files the command-line tool reads and writes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{estimate_nsbm_with, EstimateOptions, NsbmEstimate};
use crate::model::{rows, DirectedGraph, LabelVector, Matrix};
use crate::spectral::{cluster, ClusterMethod, KMeansConfig};

/// A parsed edge list. Node indices follow first appearance in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub ids: Vec<String>,
    /// `(source, target, weight)` with duplicates already summed.
    pub edges: Vec<(usize, usize, f64)>,
    pub self_loops_dropped: usize,
}

impl EdgeList {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn to_graph(&self) -> Result<DirectedGraph> {
        DirectedGraph::from_edges(self.n(), self.edges.iter().copied())
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

/// Reads a CSV with header `source,target` or `source,target,weight`.
pub fn load_edge_list(path: &Path) -> Result<EdgeList> {
    read_edge_list(open(path)?, path)
}

pub fn read_edge_list<R: Read>(input: R, path: &Path) -> Result<EdgeList> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    let names: Vec<&str> = header.iter().collect();
    let weighted = match names.as_slice() {
        ["source", "target"] => false,
        ["source", "target", "weight"] => true,
        _ => {
            return Err(parse_error(
                path,
                1,
                format!("expected header `source,target[,weight]`, found `{}`", names.join(",")),
            ))
        }
    };

    let mut ids = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut weights: HashMap<(usize, usize), f64> = HashMap::new();
    let mut order = Vec::new();
    let mut self_loops = 0;
    let mut records = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        records += 1;
        let (source, target) = (&record[0], &record[1]);
        if source.is_empty() || target.is_empty() {
            return Err(parse_error(path, line, "empty node id"));
        }
        let weight = if weighted {
            let w: f64 = record[2]
                .parse()
                .map_err(|_| parse_error(path, line, format!("invalid weight `{}`", &record[2])))?;
            if !w.is_finite() || w < 0.0 {
                return Err(parse_error(path, line, format!("weight must be finite and non-negative, got {w}")));
            }
            w
        } else {
            1.0
        };
        if source == target {
            self_loops += 1;
            continue;
        }
        let mut intern = |id: &str| {
            *index.entry(id.to_string()).or_insert_with(|| {
                ids.push(id.to_string());
                ids.len() - 1
            })
        };
        let (i, j) = (intern(source), intern(target));
        if weight == 0.0 {
            continue;
        }
        let slot = weights.entry((i, j)).or_insert_with(|| {
            order.push((i, j));
            0.0
        });
        *slot += weight;
    }
    if records == 0 {
        return Err(Error::Data(format!("{} has no edge records", path.display())));
    }
    if self_loops > 0 {
        log::info!("dropped {self_loops} self-loop record(s) from {}", path.display());
    }
    let edges = order.into_iter().map(|(i, j)| (i, j, weights[&(i, j)])).collect();
    Ok(EdgeList {
        ids,
        edges,
        self_loops_dropped: self_loops,
    })
}

/// Writes `source,target,weight` for every nonzero entry, row by row.
pub fn write_edge_list(path: &Path, graph: &DirectedGraph, ids: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["source", "target", "weight"])?;
    let m = graph.weights();
    for i in 0..graph.n() {
        for j in 0..graph.n() {
            let x = m[(i, j)];
            if x != 0.0 {
                w.write_record([ids[i].as_str(), ids[j].as_str(), &x.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreprocessOptions {
    /// Nodes with in- or out-degree below this are removed.
    pub min_degree: usize,
    /// Weights above 1 are replaced by this value.
    pub weight_cap: f64,
    /// Repeat the degree filter until no further node is removed.
    pub iterative: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            min_degree: 4,
            weight_cap: 2.0,
            iterative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessLog {
    /// Original indices of the retained nodes, in order.
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
    pub rounds: usize,
    pub capped_edges: usize,
}

/// Drops nodes whose in-degree or out-degree (nonzero entries) is below
/// `min_degree`, then caps weights above 1 at `weight_cap`.
pub fn preprocess(graph: &DirectedGraph, opts: &PreprocessOptions) -> Result<(DirectedGraph, PreprocessLog)> {
    if !(opts.weight_cap > 0.0) || !opts.weight_cap.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "weight cap must be positive, got {}",
            opts.weight_cap
        )));
    }
    let mut kept: Vec<usize> = (0..graph.n()).collect();
    let mut current = graph.clone();
    let mut rounds = 0;
    loop {
        let (out_d, in_d) = (current.out_degrees(), current.in_degrees());
        let keep: Vec<usize> = (0..current.n())
            .filter(|&i| out_d[i] >= opts.min_degree && in_d[i] >= opts.min_degree)
            .collect();
        rounds += 1;
        if keep.len() == current.n() {
            break;
        }
        current = current.subgraph(&keep);
        kept = keep.iter().map(|&a| kept[a]).collect();
        if !opts.iterative || current.n() == 0 {
            break;
        }
    }
    if current.n() == 0 {
        return Err(Error::Data(format!(
            "every node has in- or out-degree below {}",
            opts.min_degree
        )));
    }
    let mut capped_edges = 0;
    let capped = current.weights().map(|w| {
        if w > 1.0 {
            capped_edges += 1;
            opts.weight_cap
        } else {
            w
        }
    });
    let mut is_kept = vec![false; graph.n()];
    kept.iter().for_each(|&i| is_kept[i] = true);
    let removed = (0..graph.n()).filter(|&i| !is_kept[i]).collect();
    Ok((
        DirectedGraph::new(capped)?,
        PreprocessLog {
            kept,
            removed,
            rounds,
            capped_edges,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    pub method: ClusterMethod,
    pub kmeans: KMeansConfig,
    pub estimate: EstimateOptions,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            method: ClusterMethod::RightSc,
            kmeans: KMeansConfig::default(),
            estimate: EstimateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberEntry {
    pub id: String,
    pub theta: f64,
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityReport {
    /// 1-based position in the report ordering.
    pub community: usize,
    pub size: usize,
    /// Usable target communities, 1-based in report numbering.
    pub psi: Vec<usize>,
    /// Members by decreasing `lambda`.
    pub members: Vec<MemberEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_median: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub k: usize,
    pub n: usize,
    pub method: ClusterMethod,
    pub ids: Vec<String>,
    /// 1-based community of each node in report numbering.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    #[serde(with = "rows")]
    pub b_hat: Matrix,
    #[serde(with = "rows")]
    pub connection_strength: Matrix,
    pub communities: Vec<CommunityReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unmatched_score_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes_without_score: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<PreprocessSummary>,
    /// The estimate in report numbering.
    #[serde(skip)]
    pub estimate: NsbmEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub options: PreprocessOptions,
    pub nodes_in: usize,
    pub removed_ids: Vec<String>,
    pub rounds: usize,
    pub capped_edges: usize,
    pub self_loops_dropped: usize,
}

impl AnalysisReport {
    pub fn labels(&self) -> LabelVector {
        self.estimate.labels.clone()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Joins external node scores and re-sorts tied communities by lower
    /// mean score.
    pub fn attach_scores(&mut self, scores: &HashMap<String, f64>) {
        let known: HashMap<&str, ()> = self.ids.iter().map(|id| (id.as_str(), ())).collect();
        let mut unmatched: Vec<String> = scores
            .keys()
            .filter(|id| !known.contains_key(id.as_str()))
            .cloned()
            .collect();
        unmatched.sort();
        if !unmatched.is_empty() {
            log::warn!("{} score id(s) not present in the graph", unmatched.len());
        }
        self.unmatched_score_ids = unmatched;
        self.nodes_without_score = Some(self.ids.iter().filter(|id| !scores.contains_key(*id)).count());
        for c in &mut self.communities {
            let mut values = Vec::new();
            for m in &mut c.members {
                m.score = scores.get(&m.id).copied();
                values.extend(m.score);
            }
            c.score_mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
            c.score_median = median(&mut values);
        }
        let order = community_order(&self.connection_strength, &self.communities);
        if order.iter().enumerate().any(|(a, &b)| a != b) {
            self.reorder(&order);
        }
    }

    /// Renumbers communities so new community `a` is old community `order[a]`.
    fn reorder(&mut self, order: &[usize]) {
        let k = self.k;
        let mut inverse = vec![0; k];
        for (a, &b) in order.iter().enumerate() {
            inverse[b] = a;
        }
        let est = relabel_estimate(&self.estimate, &inverse);
        self.b_hat = est.b_hat.clone();
        self.connection_strength = Matrix::from_fn(k, k, |a, b| self.connection_strength[(order[a], order[b])]);
        self.labels = est.labels.to_one_based();
        self.sizes = est.labels.sizes();
        let mut communities: Vec<CommunityReport> = order.iter().map(|&b| self.communities[b].clone()).collect();
        for (a, c) in communities.iter_mut().enumerate() {
            c.community = a + 1;
            c.psi = est.psi[a].iter().map(|&l| l + 1).collect();
        }
        self.communities = communities;
        self.estimate = est;
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

/// Communities by decreasing `M[k, k]`, then lower mean score, then index.
fn community_order(m: &Matrix, communities: &[CommunityReport]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| {
        m[(b, b)]
            .total_cmp(&m[(a, a)])
            .then_with(|| {
                let sa = communities.get(a).and_then(|c| c.score_mean).unwrap_or(f64::INFINITY);
                let sb = communities.get(b).and_then(|c| c.score_mean).unwrap_or(f64::INFINITY);
                sa.total_cmp(&sb)
            })
            .then(a.cmp(&b))
    });
    order
}

/// Renames community `c` to `mapping[c]` throughout an estimate.
fn relabel_estimate(est: &NsbmEstimate, mapping: &[usize]) -> NsbmEstimate {
    let k = mapping.len();
    let mut b_hat = Matrix::zeros(k, k);
    let mut psi = vec![Vec::new(); k];
    for c in 0..k {
        for l in 0..k {
            b_hat[(mapping[c], mapping[l])] = est.b_hat[(c, l)];
        }
        let mut p: Vec<usize> = est.psi[c].iter().map(|&l| mapping[l]).collect();
        p.sort_unstable();
        psi[mapping[c]] = p;
    }
    let mut failures: Vec<_> = est
        .failures
        .iter()
        .map(|f| crate::estimate::CommunityFailure {
            community: mapping[f.community],
            reason: f.reason.clone(),
        })
        .collect();
    failures.sort_by_key(|f| f.community);
    NsbmEstimate {
        labels: est.labels.relabeled(mapping).expect("mapping is a permutation"),
        theta_hat: est.theta_hat.clone(),
        lambda_hat: est.lambda_hat.clone(),
        b_hat,
        psi,
        failures,
    }
}

/// Detects `k` communities, fits the NSBM to them, and summarises the fit
/// with communities numbered by decreasing within-community strength.
pub fn analyze(graph: &DirectedGraph, k: usize, cfg: &AnalyzeConfig) -> Result<AnalysisReport> {
    let ids: Vec<String> = (1..=graph.n()).map(|i| i.to_string()).collect();
    analyze_named(graph, &ids, k, cfg)
}

pub fn analyze_named(
    graph: &DirectedGraph,
    ids: &[String],
    k: usize,
    cfg: &AnalyzeConfig,
) -> Result<AnalysisReport> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "analysis needs K >= 2 for an identifiable model, got {k}"
        )));
    }
    if ids.len() != graph.n() {
        return Err(Error::Dimension(format!("{} ids for {} nodes", ids.len(), graph.n())));
    }
    if !matches!(cfg.method, ClusterMethod::RightSc | ClusterMethod::RightSmst) {
        return Err(Error::InvalidParameter(format!(
            "analysis clusters with right_sc or right_smst, not {}",
            cfg.method
        )));
    }
    let labels = cluster(graph, k, cfg.method, &cfg.kmeans)?;
    let est = estimate_nsbm_with(graph, &labels, &cfg.estimate)?;
    for f in &est.failures {
        log::warn!("community {}: {}", f.community + 1, f.reason);
    }
    let m = est.connection_strength()?;
    let order = community_order(&m, &[]);
    let mut inverse = vec![0; k];
    for (a, &b) in order.iter().enumerate() {
        inverse[b] = a;
    }
    let est = relabel_estimate(&est, &inverse);
    let m = est.connection_strength()?;

    let members = est.labels.members();
    let communities = members
        .iter()
        .enumerate()
        .map(|(c, group)| {
            let mut entries: Vec<MemberEntry> = group
                .iter()
                .map(|&i| MemberEntry {
                    id: ids[i].clone(),
                    theta: est.theta_hat[i],
                    lambda: est.lambda_hat[i],
                    score: None,
                })
                .collect();
            entries.sort_by(|a, b| {
                b.lambda
                    .unwrap_or(f64::NEG_INFINITY)
                    .total_cmp(&a.lambda.unwrap_or(f64::NEG_INFINITY))
                    .then_with(|| a.id.cmp(&b.id))
            });
            CommunityReport {
                community: c + 1,
                size: group.len(),
                psi: est.psi[c].iter().map(|&l| l + 1).collect(),
                members: entries,
                failure: est
                    .failures
                    .iter()
                    .find(|f| f.community == c)
                    .map(|f| f.reason.clone()),
                score_mean: None,
                score_median: None,
            }
        })
        .collect();

    Ok(AnalysisReport {
        k,
        n: graph.n(),
        method: cfg.method,
        ids: ids.to_vec(),
        labels: est.labels.to_one_based(),
        sizes: est.labels.sizes(),
        b_hat: est.b_hat.clone(),
        connection_strength: m,
        communities,
        unmatched_score_ids: Vec::new(),
        nodes_without_score: None,
        preprocessing: None,
        estimate: est,
    })
}

/// Reads an `id,score` CSV.
pub fn load_scores(path: &Path) -> Result<HashMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["id", "score"] {
        return Err(parse_error(path, 1, "expected header `id,score`"));
    }
    let mut scores = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let score: f64 = record[1]
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid score `{}`", &record[1])))?;
        scores.insert(record[0].to_string(), score);
    }
    Ok(scores)
}

/// Writes `id,community` with 1-based communities.
pub fn write_labels(path: &Path, ids: &[String], labels: &LabelVector) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["id", "community"])?;
    for (id, c) in ids.iter().zip(labels.to_one_based()) {
        w.write_record([id.as_str(), &c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an `id,community` CSV and aligns it with `ids`. Every id needs a
/// label; K is the largest community number.
pub fn load_labels(path: &Path, ids: &[String]) -> Result<LabelVector> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["id", "community"] {
        return Err(parse_error(path, 1, "expected header `id,community`"));
    }
    let mut by_id = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let c: usize = record[1]
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| parse_error(path, line, format!("community must be a positive integer, got `{}`", &record[1])))?;
        by_id.insert(record[0].to_string(), c);
    }
    let labels = ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::Data(format!("node `{id}` has no label in {}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    LabelVector::from_one_based(&labels)
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeEstimate {
    pub id: String,
    pub community: usize,
    pub theta: f64,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureEntry {
    pub community: usize,
    pub reason: String,
}

/// JSON form of an estimate with 1-based communities.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub k: usize,
    pub nodes: Vec<NodeEstimate>,
    #[serde(with = "rows")]
    pub b_hat: Matrix,
    pub psi: Vec<Vec<usize>>,
    #[serde(with = "rows")]
    pub connection_strength: Matrix,
    pub failures: Vec<FailureEntry>,
}

impl EstimateReport {
    pub fn new(est: &NsbmEstimate, ids: &[String]) -> Result<Self> {
        Ok(Self {
            k: est.labels.k(),
            nodes: ids
                .iter()
                .enumerate()
                .map(|(i, id)| NodeEstimate {
                    id: id.clone(),
                    community: est.labels.get(i) + 1,
                    theta: est.theta_hat[i],
                    lambda: est.lambda_hat[i],
                })
                .collect(),
            b_hat: est.b_hat.clone(),
            psi: est
                .psi
                .iter()
                .map(|p| p.iter().map(|&l| l + 1).collect())
                .collect(),
            connection_strength: est.connection_strength()?,
            failures: est
                .failures
                .iter()
                .map(|f| FailureEntry {
                    community: f.community + 1,
                    reason: f.reason.clone(),
                })
                .collect(),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{make_sim_params, sample_nsbm, SimDesign};
    use crate::metrics::misclustering;
    use nalgebra::dmatrix;

    fn parse(text: &str) -> Result<EdgeList> {
        read_edge_list(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn duplicates_are_summed() {
        let e = parse("source,target,weight\na,b,1\na,b,1\n").unwrap();
        assert_eq!(e.edges, vec![(0, 1, 2.0)]);
    }

    #[test]
    fn self_loops_are_dropped_and_counted() {
        let e = parse("source,target,weight\na,a,3\na,b,1\n").unwrap();
        assert_eq!(e.self_loops_dropped, 1);
        assert_eq!(e.edges.len(), 1);
    }

    #[test]
    fn missing_weight_column_defaults_to_one() {
        let e = parse("source,target\nx,y\ny,z\n").unwrap();
        assert!(e.edges.iter().all(|&(_, _, w)| w == 1.0));
        assert_eq!(e.ids, vec!["x", "y", "z"]);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        match parse("source,target,weight\na,b,1\na,c,oops\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("source,target,weight\na,b,1\na,c\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("from,to\na,b\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("source,target,weight\na,b,-1\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(matches!(parse(""), Err(Error::Data(_))));
        assert!(matches!(parse("source,target\n"), Err(Error::Data(_))));
    }

    /// Complete graph on 11 nodes except that node 0 only sends to 1, 2, 3.
    fn low_sender_graph() -> DirectedGraph {
        let n = 11;
        let mut m = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        for j in 4..n {
            m[(0, j)] = 0.0;
        }
        m[(0, 2)] = 7.0;
        DirectedGraph::new(m).unwrap()
    }

    #[test]
    fn either_side_degree_rule() {
        let g = low_sender_graph();
        assert_eq!((g.out_degrees()[0], g.in_degrees()[0]), (3, 10));
        let (h, log) = preprocess(&g, &PreprocessOptions::default()).unwrap();
        assert_eq!(log.removed, vec![0]);
        assert_eq!(h.n(), 10);
    }

    #[test]
    fn weights_above_one_are_capped() {
        let g = low_sender_graph();
        let (h, log) = preprocess(&g, &PreprocessOptions { min_degree: 1, ..Default::default() }).unwrap();
        assert_eq!(h.weights()[(0, 2)], 2.0);
        assert_eq!(h.weights()[(0, 3)], 1.0);
        assert_eq!(log.capped_edges, 1);
        assert!(log.removed.is_empty());
    }

    #[test]
    fn fixed_point_graph_is_unchanged() {
        let g = DirectedGraph::new(Matrix::from_fn(6, 6, |i, j| if i == j { 0.0 } else { 1.0 })).unwrap();
        let (h, _) = preprocess(&g, &PreprocessOptions::default()).unwrap();
        assert_eq!(h, g);
    }

    #[test]
    fn single_pass_can_leave_low_degree_nodes() {
        // removing node 0 drops node 1 below the threshold
        let n = 6;
        let mut m = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        for j in 1..n {
            m[(0, j)] = 0.0;
        }
        m[(0, 1)] = 1.0;
        for j in 2..n {
            m[(1, j)] = 0.0;
        }
        m[(1, 3)] = 1.0;
        m[(1, 4)] = 1.0;
        let g = DirectedGraph::new(m).unwrap();
        let opts = PreprocessOptions { min_degree: 2, ..Default::default() };
        let (once, log) = preprocess(&g, &opts).unwrap();
        assert_eq!(log.removed, vec![0]);
        let (twice, _) = preprocess(&once, &opts).unwrap();
        assert_eq!(twice.n(), once.n());
        let strict = PreprocessOptions { min_degree: 3, ..Default::default() };
        let (a, _) = preprocess(&g, &strict).unwrap();
        let (b, _) = preprocess(&a, &strict).unwrap();
        assert!(b.n() < a.n());
        let iterative = PreprocessOptions { iterative: true, ..strict };
        let (c, log) = preprocess(&g, &iterative).unwrap();
        assert_eq!(preprocess(&c, &iterative).unwrap().0, c);
        assert!(log.rounds >= 2);
    }

    #[test]
    fn everything_removed_is_an_error() {
        let g = DirectedGraph::new(Matrix::zeros(4, 4)).unwrap();
        assert!(matches!(preprocess(&g, &PreprocessOptions::default()), Err(Error::Data(_))));
    }

    fn hierarchical_graph(seed: u64) -> (crate::model::NsbmParams, DirectedGraph) {
        let mut design = SimDesign::binary(240, 3, 0.2, 0.5).with_target(30.0);
        design.block_matrix = Some(vec![
            vec![1.0, 0.3, 0.1],
            vec![0.3, 1.0, 0.3],
            vec![0.1, 0.3, 1.0],
        ]);
        design.community_theta_scale = Some(vec![1.0, 0.7, 0.45]);
        design.theta_low_factor = 0.3;
        let params = make_sim_params(&design, seed).unwrap();
        let g = sample_nsbm(&params, seed).unwrap();
        (params, g)
    }

    #[test]
    fn k_one_is_rejected() {
        let (_, g) = hierarchical_graph(1);
        assert!(matches!(analyze(&g, 1, &AnalyzeConfig::default()), Err(Error::InvalidParameter(_))));
    }

    fn relaxed() -> AnalyzeConfig {
        AnalyzeConfig {
            estimate: EstimateOptions { relaxed_psi: Some(0.0) },
            ..AnalyzeConfig::default()
        }
    }

    #[test]
    fn report_is_internally_consistent() {
        let (params, g) = hierarchical_graph(2);
        let report = analyze(&g, 3, &relaxed()).unwrap();
        assert_eq!(report.sizes.iter().sum::<usize>(), report.n);
        let labels = report.labels();
        let rate = misclustering(&labels, &params.labels).unwrap().rate;
        assert!(rate < 0.05, "misclustering {rate}");
        let est = &report.estimate;
        assert!(est.is_complete());
        let sizes = labels.sizes();
        let members = labels.members();
        for k in 0..3 {
            for l in 0..3 {
                let mut total = 0.0;
                for &i in &members[k] {
                    let b = est.b_hat[(k, l)];
                    let lam = est.lambda_hat[i].unwrap();
                    let p = if b == 0.0 && lam < 0.0 { 0.0 } else { b.powf(lam) };
                    total += est.theta_hat[i] * p;
                }
                let want = total / sizes[k] as f64;
                assert!((want - report.connection_strength[(k, l)]).abs() < 1e-12);
            }
        }
        let diag: Vec<f64> = (0..3).map(|c| report.connection_strength[(c, c)]).collect();
        assert!(diag.windows(2).all(|w| w[0] >= w[1]));
        for c in &report.communities {
            let lambdas: Vec<f64> = c.members.iter().map(|m| m.lambda.unwrap()).collect();
            assert!(lambdas.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn strict_psi_failures_are_reported() {
        let (_, g) = hierarchical_graph(2);
        let report = analyze(&g, 3, &AnalyzeConfig::default()).unwrap();
        assert!(report.estimate.failures.iter().all(|f| !f.reason.is_empty()));
        let missing = report.estimate.lambda_hat.iter().filter(|l| l.is_none()).count();
        let failed: usize = report.estimate.failures.iter().map(|f| report.sizes[f.community]).sum();
        assert_eq!(missing, failed);
    }

    #[test]
    fn node_reordering_preserves_partition() {
        let (_, g) = hierarchical_graph(3);
        let cfg = AnalyzeConfig::default();
        let base = analyze(&g, 3, &cfg).unwrap().labels();
        let order: Vec<usize> = (0..g.n()).rev().collect();
        let perm = analyze(&g.permuted(&order), 3, &cfg).unwrap().labels();
        let back = base.permuted_nodes(&order);
        assert_eq!(misclustering(&perm, &back).unwrap().rate, 0.0);
    }

    #[test]
    fn scores_are_joined_and_unmatched_ids_listed() {
        let (_, g) = hierarchical_graph(4);
        let mut report = analyze(&g, 3, &relaxed()).unwrap();
        let mut scores: HashMap<String, f64> = report.ids.iter().take(50).map(|id| (id.clone(), 1.0)).collect();
        scores.insert("nobody".into(), 3.0);
        report.attach_scores(&scores);
        assert_eq!(report.unmatched_score_ids, vec!["nobody".to_string()]);
        assert_eq!(report.nodes_without_score, Some(report.n - 50));
    }

    #[test]
    fn relabel_round_trip() {
        let labels = LabelVector::new(vec![0, 0, 1, 1, 2, 2], 3).unwrap();
        let est = NsbmEstimate {
            labels,
            theta_hat: vec![0.5; 6],
            lambda_hat: vec![Some(1.0); 6],
            b_hat: dmatrix![1.0, 0.2, 0.3; 0.4, 1.0, 0.5; 0.6, 0.7, 1.0],
            psi: vec![vec![0, 1, 2], vec![0, 1], vec![1, 2]],
            failures: vec![],
        };
        let r = relabel_estimate(&est, &[2, 0, 1]);
        assert_eq!(r.b_hat[(2, 0)], 0.2);
        assert_eq!(r.psi[0], vec![0, 2]);
        assert_eq!(r.labels.as_slice(), &[2, 2, 0, 0, 1, 1]);
    }

    #[test]
    fn labels_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let labels = LabelVector::new(vec![1, 0, 1], 2).unwrap();
        write_labels(&path, &ids, &labels).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "id,community\na,2\nb,1\nc,2\n");
        assert_eq!(load_labels(&path, &ids).unwrap(), labels);
        let more = vec!["a".to_string(), "zz".to_string()];
        assert!(matches!(load_labels(&path, &more), Err(Error::Data(_))));
    }
}
