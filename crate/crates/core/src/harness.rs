//! Monte Carlo sweeps over simulation designs.
//!
//! Each replication draws its own parameters and graph from a seed derived
//! from the master seed, the grid cell and the replication index, so results
//! do not depend on how replications are scheduled across threads.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{block_model_fit, estimate_nsbm_with, reconstruct_p, EstimateOptions, Estimator};
use crate::generate::{make_sim_params, sample_design_graph, SimDesign};
use crate::metrics::{misclustering, relative_frobenius};
use crate::model::{expected_matrix, DirectedGraph, LabelVector, Matrix};
use crate::spectral::{cluster, ClusterMethod, KMeansConfig};

pub const CSV_HEADER: [&str; 10] = [
    "sweep_var",
    "value",
    "rep",
    "kind",
    "name",
    "accuracy",
    "percomm_err",
    "rel_err",
    "fail",
    "ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    T,
    Beta,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::T => "t",
            SweepVar::Beta => "beta",
        }
    }

    fn apply(self, design: &SimDesign, value: f64) -> SimDesign {
        let mut d = design.clone();
        match self {
            SweepVar::T => d.t = value,
            SweepVar::Beta => d.beta = value,
        }
        d
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_replications() -> usize {
    20
}

fn default_methods() -> Vec<ClusterMethod> {
    vec![
        ClusterMethod::RightSc,
        ClusterMethod::RightSmst,
        ClusterMethod::LeftSc,
        ClusterMethod::LeftSsc,
        ClusterMethod::SymmetricSc,
    ]
}

fn default_estimators() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}

/// The Psi rule for simulations: a target community counts once any member
/// sends to it, and members without edges there use the floored log mean.
/// Under the simulation designs some low-rate nodes almost surely have no
/// edges into other communities, which empties Psi under the strict rule.
pub fn simulation_estimate_options() -> EstimateOptions {
    EstimateOptions {
        relaxed_psi: Some(0.0),
    }
}

/// What is measured on each sampled graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    #[serde(default = "default_methods")]
    pub methods: Vec<ClusterMethod>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub kmeans: KMeansConfig,
    #[serde(default = "simulation_estimate_options")]
    pub estimate: EstimateOptions,
    /// Fill the `ms` column. Off by default since wall times differ
    /// between runs.
    #[serde(default)]
    pub record_timing: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            estimators: default_estimators(),
            kmeans: KMeansConfig::default(),
            estimate: simulation_estimate_options(),
            record_timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: SimDesign,
    pub sweep: SweepVar,
    pub grid: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(flatten)]
    pub protocol: Protocol,
}

impl ExperimentConfig {
    pub fn new(design: SimDesign, sweep: SweepVar, grid: Vec<f64>) -> Self {
        Self {
            design,
            sweep,
            grid,
            replications: default_replications(),
            master_seed: 0,
            output: None,
            protocol: Protocol::default(),
        }
    }

    /// 1200 nodes and 100 replications per grid value.
    pub fn full_scale(mut self) -> Self {
        self.design.n = 1200;
        self.replications = 100;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid values must be finite".into()));
        }
        for &v in &self.grid {
            self.sweep.apply(&self.design, v).validate()?;
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Method,
    Estimator,
}

impl RowKind {
    pub fn name(self) -> &'static str {
        match self {
            RowKind::Method => "method",
            RowKind::Estimator => "estimator",
        }
    }
}

/// One clusterer or estimator evaluated on one sampled graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub kind: RowKind,
    pub name: String,
    pub accuracy: Option<f64>,
    pub percomm_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub fail: bool,
    pub ms: Option<f64>,
}

impl Measurement {
    fn failed(kind: RowKind, name: &str) -> Self {
        Self {
            kind,
            name: name.to_string(),
            accuracy: None,
            percomm_err: None,
            rel_err: None,
            fail: true,
            ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_var: SweepVar,
    pub value: f64,
    pub rep: usize,
    #[serde(flatten)]
    pub m: Measurement,
}

struct Timer(Option<Instant>);

impl Timer {
    fn start(enabled: bool) -> Self {
        Timer(enabled.then(Instant::now))
    }

    fn ms(&self) -> Option<f64> {
        self.0.map(|t| (t.elapsed().as_secs_f64() * 1000.0 * 1000.0).round() / 1000.0)
    }
}

/// Samples one graph from `design` and scores every method and estimator on
/// it. Estimator errors are relative to the expected matrix of the sampled
/// parameters. Individual failures become rows with `fail` set; only a
/// design that cannot be sampled is an error.
pub fn run_replication(design: &SimDesign, protocol: &Protocol, seed: u64) -> Result<Vec<Measurement>> {
    let params = make_sim_params(design, seed)?;
    let graph = sample_design_graph(design, &params, seed)?;
    let truth = &params.labels;
    let k = design.k;
    let record_timing = protocol.record_timing;
    let cfg = KMeansConfig {
        seed: splitmix64(seed ^ 0x6b6d_6561_6e73),
        ..protocol.kmeans.clone()
    };

    let mut cache: HashMap<ClusterMethod, (Option<LabelVector>, Option<f64>)> = HashMap::new();
    let mut labels_for = |m: ClusterMethod| -> (Option<LabelVector>, Option<f64>) {
        cache
            .entry(m)
            .or_insert_with(|| {
                let timer = Timer::start(record_timing);
                let out = cluster(&graph, k, m, &cfg);
                if let Err(e) = &out {
                    log::debug!("{m} failed: {e}");
                }
                (out.ok(), timer.ms())
            })
            .clone()
    };

    let mut rows = Vec::with_capacity(protocol.methods.len() + protocol.estimators.len());
    for &m in &protocol.methods {
        let (labels, ms) = labels_for(m);
        let row = match labels.map(|l| misclustering(&l, truth)) {
            Some(Ok(score)) => Measurement {
                kind: RowKind::Method,
                name: m.name().to_string(),
                accuracy: Some(score.accuracy()),
                percomm_err: Some(score.per_community),
                rel_err: None,
                fail: false,
                ms,
            },
            _ => Measurement::failed(RowKind::Method, m.name()),
        };
        rows.push(row);
    }

    if protocol.estimators.is_empty() {
        return Ok(rows);
    }
    let p_true = expected_matrix(&params)?;
    for &e in &protocol.estimators {
        let timer = Timer::start(record_timing);
        let p_hat = estimator_matrix(&graph, e, &protocol.estimate, &mut labels_for);
        let ms = timer.ms();
        let row = match p_hat.and_then(|p| relative_frobenius(&p, &p_true)) {
            Ok(err) => Measurement {
                kind: RowKind::Estimator,
                name: e.name().to_string(),
                accuracy: None,
                percomm_err: None,
                rel_err: Some(err),
                fail: false,
                ms,
            },
            Err(err) => {
                log::debug!("{e} failed: {err}");
                Measurement::failed(RowKind::Estimator, e.name())
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Same fits as `estimate_baseline`, reusing clusterings already computed.
fn estimator_matrix(
    graph: &DirectedGraph,
    e: Estimator,
    opts: &EstimateOptions,
    labels_for: &mut impl FnMut(ClusterMethod) -> (Option<LabelVector>, Option<f64>),
) -> Result<Matrix> {
    let mut get = |m: ClusterMethod| {
        labels_for(m)
            .0
            .ok_or_else(|| Error::Numerical(format!("{m} clustering failed")))
    };
    match e {
        Estimator::Nsbm => reconstruct_p(&estimate_nsbm_with(graph, &get(ClusterMethod::RightSc)?, opts)?),
        Estimator::Dsbm | Estimator::Dcsbm => {
            let labels = get(ClusterMethod::SymmetricSc)?;
            block_model_fit(graph, &labels, &labels, e == Estimator::Dcsbm)
        }
        Estimator::Scbm => {
            let senders = get(ClusterMethod::LeftSsc)?;
            let receivers = get(ClusterMethod::RightSc)?;
            block_model_fit(graph, &senders, &receivers, true)
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of replication `rep` in grid cell `cell`.
pub fn replication_seed(master: u64, cell: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ cell as u64) ^ rep as u64)
}

/// Mean and spread of one quantity over the successful replications of a cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Moments {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Moments { mean: None, sd: None };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Moments { mean: Some(mean), sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub sweep_var: SweepVar,
    pub value: f64,
    pub kind: RowKind,
    pub name: String,
    pub replications: usize,
    pub failures: usize,
    pub accuracy: Moments,
    pub percomm_err: Moments,
    pub rel_err: Moments,
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<CellSummary>,
}

impl SweepResults {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.sweep_var.name().to_string(),
                r.value.to_string(),
                r.rep.to_string(),
                r.m.kind.name().to_string(),
                r.m.name.clone(),
                opt(r.m.accuracy),
                opt(r.m.percomm_err),
                opt(r.m.rel_err),
                u8::from(r.m.fail).to_string(),
                opt(r.m.ms),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn write_summary_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Rows of one clusterer or estimator at one grid value.
    pub fn cell<'a>(&'a self, value: f64, name: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.value == value && r.m.name == name)
    }

    pub fn summary_for(&self, value: f64, kind: RowKind, name: &str) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|s| s.value == value && s.kind == kind && s.name == name)
    }
}

/// Runs every grid value and replication on a pool of `jobs` threads
/// (`0` for one per core). Rows come back ordered by grid value, replication,
/// then the configured method and estimator order.
pub fn run_sweep(config: &ExperimentConfig, jobs: usize) -> Result<SweepResults> {
    config.validate()?;
    let tasks: Vec<(usize, usize)> = (0..config.grid.len())
        .flat_map(|cell| (0..config.replications).map(move |rep| (cell, rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;

    let mut per_task: Vec<((usize, usize), Vec<ResultRow>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(cell, rep)| {
                let value = config.grid[cell];
                let design = config.sweep.apply(&config.design, value);
                let seed = replication_seed(config.master_seed, cell, rep);
                let measurements = run_replication(&design, &config.protocol, seed).unwrap_or_else(|e| {
                    log::warn!("{}={value} rep {rep}: {e}", config.sweep);
                    config
                        .protocol
                        .methods
                        .iter()
                        .map(|m| Measurement::failed(RowKind::Method, m.name()))
                        .chain(
                            config
                                .protocol
                                .estimators
                                .iter()
                                .map(|e| Measurement::failed(RowKind::Estimator, e.name())),
                        )
                        .collect()
                });
                let rows = measurements
                    .into_iter()
                    .map(|m| ResultRow {
                        sweep_var: config.sweep,
                        value,
                        rep,
                        m,
                    })
                    .collect();
                ((cell, rep), rows)
            })
            .collect()
    });
    per_task.sort_by_key(|(key, _)| *key);
    let rows: Vec<ResultRow> = per_task.into_iter().flat_map(|(_, r)| r).collect();
    let summary = summarize(config, &rows);
    Ok(SweepResults { rows, summary })
}

fn summarize(config: &ExperimentConfig, rows: &[ResultRow]) -> Vec<CellSummary> {
    let names: Vec<(RowKind, &str)> = config
        .protocol
        .methods
        .iter()
        .map(|m| (RowKind::Method, m.name()))
        .chain(config.protocol.estimators.iter().map(|e| (RowKind::Estimator, e.name())))
        .collect();
    let mut out = Vec::new();
    for &value in &config.grid {
        for &(kind, name) in &names {
            let cell: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.value == value && r.m.kind == kind && r.m.name == name)
                .collect();
            let ok: Vec<&Measurement> = cell.iter().filter(|r| !r.m.fail).map(|r| &r.m).collect();
            let collect = |f: fn(&Measurement) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|m| f(m)).collect() };
            out.push(CellSummary {
                sweep_var: config.sweep,
                value,
                kind,
                name: name.to_string(),
                replications: cell.len(),
                failures: cell.len() - ok.len(),
                accuracy: Moments::of(&collect(|m| m.accuracy)),
                percomm_err: Moments::of(&collect(|m| m.percomm_err)),
                rel_err: Moments::of(&collect(|m| m.rel_err)),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let design = SimDesign::binary(150, 3, 0.2, 1.0).with_target(25.0);
        let mut c = ExperimentConfig::new(design, SweepVar::T, vec![0.5, 1.5]);
        c.replications = 3;
        c.protocol.kmeans.restarts = 5;
        c
    }

    #[test]
    fn row_count_matches_grid_reps_and_names() {
        let c = small_config();
        let res = run_sweep(&c, 2).unwrap();
        assert_eq!(res.rows.len(), 2 * 3 * (5 + 4));
        assert_eq!(res.summary.len(), 2 * 9);
        for r in &res.rows {
            if let Some(a) = r.m.accuracy {
                assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn schedule_does_not_change_output() {
        let c = small_config();
        let mut one = Vec::new();
        run_sweep(&c, 1).unwrap().write_csv(&mut one).unwrap();
        let mut four = Vec::new();
        run_sweep(&c, 4).unwrap().write_csv(&mut four).unwrap();
        assert_eq!(one, four);
        let header = String::from_utf8(one).unwrap();
        assert!(header.starts_with("sweep_var,value,rep,kind,name,accuracy,percomm_err,rel_err,fail,ms\n"));
    }

    #[test]
    fn same_seed_same_replication() {
        let d = SimDesign::binary(120, 2, 0.2, 1.0).with_target(20.0);
        let mut protocol = Protocol::default();
        protocol.kmeans.restarts = 3;
        let a = run_replication(&d, &protocol, 9).unwrap();
        let b = run_replication(&d, &protocol, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_regime() {
        let d = SimDesign::binary(300, 3, 0.1, 0.0).with_target(40.0);
        let protocol = Protocol {
            estimators: vec![],
            ..Protocol::default()
        };
        let rows = run_replication(&d, &protocol, 3).unwrap();
        // left embeddings still see the two-level theta
        for r in rows {
            match r.name.as_str() {
                "right_sc" | "right_smst" | "symmetric_sc" => assert_eq!(r.accuracy, Some(1.0), "{}", r.name),
                "left_ssc" => assert!(r.accuracy.unwrap() > 0.9),
                _ => assert!(r.accuracy.is_some()),
            }
        }
    }

    #[test]
    fn failed_design_becomes_failure_rows() {
        let mut c = small_config();
        c.design = SimDesign::binary(30, 3, 0.2, 1.0);
        c.grid = vec![1.0];
        c.replications = 1;
        let res = run_sweep(&c, 1).unwrap();
        assert!(res.rows.iter().all(|r| r.m.fail));
        assert_eq!(res.summary[0].failures, 1);
        assert_eq!(res.summary[0].accuracy.mean, None);
    }

    #[test]
    fn moments() {
        let m = Moments::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, Some(2.0));
        assert_eq!(m.sd, Some(1.0));
        assert_eq!(Moments::of(&[4.0]).sd, None);
    }

    #[test]
    fn config_json_defaults() {
        let json = r#"{"design": {"n": 600, "K": 3, "beta": 0.2, "t": 1.5},
                       "sweep": "t", "grid": [0.2, 0.4]}"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.replications, 20);
        assert_eq!(c.protocol.methods.len(), 5);
        assert_eq!(c.protocol.estimators.len(), 4);
        assert!(!c.protocol.record_timing);
        assert_eq!(c.protocol.estimate.relaxed_psi, Some(0.0));
        c.validate().unwrap();
        let big = c.full_scale();
        assert_eq!((big.design.n, big.replications), (1200, 100));
    }

    #[test]
    fn empty_grid_rejected() {
        let mut c = small_config();
        c.grid.clear();
        assert!(c.validate().is_err());
        c.grid = vec![1.0];
        c.replications = 0;
        assert!(c.validate().is_err());
    }
}
