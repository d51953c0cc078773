use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nsbm::error::{Error, Result};
use nsbm::estimate::{estimate_nsbm_with, EstimateOptions};
use nsbm::generate::{make_sim_params, sample_design_graph, SimDesign};
use nsbm::harness::{run_sweep, ExperimentConfig};
use nsbm::pipeline::{
    analyze_named, load_edge_list, load_labels, load_scores, preprocess, write_edge_list,
    write_labels, AnalyzeConfig, EstimateReport, PreprocessOptions, PreprocessSummary,
};
use nsbm::spectral::{cluster, ClusterMethod, KMeansConfig};

#[derive(Parser)]
#[command(name = "nsbm", version, about = "Community detection and estimation for nominated directed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a network from a simulation design and write its edge list
    Generate(GenerateArgs),
    /// Cluster the nodes of a network
    Detect(DetectArgs),
    /// Fit the model to a network with given communities
    Estimate(EstimateArgs),
    /// Run a Monte Carlo sweep
    Simulate(SimulateArgs),
    /// Filter, cluster and fit a network and write a report
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the planted communities as `id,community`
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Also write the sampled parameters as JSON
    #[arg(long)]
    params_out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, default_value = "right_sc", value_parser = parse_method)]
    method: ClusterMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Admit a target community when at least this fraction of rows reach it
    #[arg(long)]
    relaxed_psi: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to the config's `output`
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// 1200 nodes and 100 replications
    #[arg(long)]
    full_scale: bool,
    /// Record wall time per row
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    k: u64,
    #[arg(long, default_value_t = 4)]
    min_degree: usize,
    #[arg(long, default_value_t = 2.0)]
    weight_cap: f64,
    /// Repeat the degree filter until it removes nothing
    #[arg(long)]
    iterative_filter: bool,
    #[arg(long, default_value = "right_sc", value_parser = parse_method)]
    method: ClusterMethod,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    relaxed_psi: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<ClusterMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })
}

fn generate(args: GenerateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.design).map_err(|source| Error::Io {
        path: args.design.clone(),
        source,
    })?;
    let design: SimDesign = serde_json::from_str(&text)?;
    let params = make_sim_params(&design, args.seed)?;
    let graph = sample_design_graph(&design, &params, args.seed)?;
    let ids: Vec<String> = (1..=graph.n()).map(|i| i.to_string()).collect();
    write_edge_list(&args.out, &graph, &ids)?;
    if let Some(path) = &args.labels_out {
        write_labels(path, &ids, &params.labels)?;
    }
    if let Some(path) = &args.params_out {
        write_json(path, &params)?;
    }
    log::info!("{} nodes, {} edges", graph.n(), graph.edge_count());
    Ok(())
}

fn detect(args: DetectArgs) -> Result<()> {
    let edges = load_edge_list(&args.input)?;
    let graph = edges.to_graph()?;
    let labels = cluster(&graph, args.k as usize, args.method, &KMeansConfig::with_seed(args.seed))?;
    write_labels(&args.out, &edges.ids, &labels)
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let edges = load_edge_list(&args.input)?;
    let graph = edges.to_graph()?;
    let labels = load_labels(&args.labels, &edges.ids)?;
    let opts = EstimateOptions {
        relaxed_psi: args.relaxed_psi,
    };
    let est = estimate_nsbm_with(&graph, &labels, &opts)?;
    EstimateReport::new(&est, &edges.ids)?.write_json(&args.out)?;
    if let Some(f) = est.failures.first() {
        return Err(Error::Estimation {
            community: f.community + 1,
            reason: f.reason.clone(),
        });
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = ExperimentConfig::from_json_file(&args.config)?;
    if args.full_scale {
        config = config.full_scale();
    }
    config.protocol.record_timing |= args.timing;
    let out = args
        .out
        .or_else(|| config.output.clone())
        .ok_or_else(|| Error::InvalidParameter("no output path given".into()))?;
    let results = run_sweep(&config, args.jobs)?;
    results.write_csv_file(&out)?;
    if let Some(path) = &args.summary {
        results.write_summary_file(path)?;
    }
    let failures = results.rows.iter().filter(|r| r.m.fail).count();
    if failures > 0 {
        log::warn!("{failures} of {} rows failed", results.rows.len());
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let edges = load_edge_list(&args.input)?;
    let graph = edges.to_graph()?;
    let opts = PreprocessOptions {
        min_degree: args.min_degree,
        weight_cap: args.weight_cap,
        iterative: args.iterative_filter,
    };
    let (filtered, log) = preprocess(&graph, &opts)?;
    let ids: Vec<String> = log.kept.iter().map(|&i| edges.ids[i].clone()).collect();
    let cfg = AnalyzeConfig {
        method: args.method,
        kmeans: KMeansConfig::with_seed(args.seed),
        estimate: EstimateOptions {
            relaxed_psi: args.relaxed_psi,
        },
    };
    let mut report = analyze_named(&filtered, &ids, args.k as usize, &cfg)?;
    report.preprocessing = Some(PreprocessSummary {
        options: opts,
        nodes_in: graph.n(),
        removed_ids: log.removed.iter().map(|&i| edges.ids[i].clone()).collect(),
        rounds: log.rounds,
        capped_edges: log.capped_edges,
        self_loops_dropped: edges.self_loops_dropped,
    });
    if let Some(path) = &args.scores {
        report.attach_scores(&load_scores(path)?);
    }
    report.write_json(&args.out)?;
    if let Some(path) = &args.labels_out {
        write_labels(path, &report.ids, &report.labels())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Detect(a) => detect(a),
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
