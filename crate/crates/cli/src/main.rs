//! `rpf`: build, tune, query and benchmark random projection forests.
//!
//! Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "rpf",
    version,
    about = "Approximate kNN search and classification with random projection forests"
)]
struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, env = "RPF_THREADS", default_value_t = 0)]
    #[serde(skip)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
enum Command {
    /// Generate a labelled Gaussian-mixture dataset (ANNM + ANNL).
    Synth(SynthArgs),
    /// Convert between CSV and the ANNM/ANNL binary formats.
    Convert(ConvertArgs),
    /// Build a forest index with fixed parameters.
    Build(BuildArgs),
    /// Tune a forest for a target recall and write the index and report.
    Tune(TuneArgs),
    /// Find the k nearest neighbors of each query row.
    Query(QueryArgs),
    /// Classify query rows by kNN majority vote.
    Classify(ClassifyArgs),
    /// Repeated stratified cross-validation of one or more methods.
    Cv(CvArgs),
    /// Cross-validate tuned forests over a list of target recalls.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Method {
    Exhaustive,
    Balltree,
    Mrpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    d: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    classes: u64,
    /// Standard deviation of the per-class Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes `<out>.annm` and `<out>.annl`.
    #[arg(long, default_value = "synthetic")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ConvertArgs {
    /// `.csv` input converts to ANNM; anything else is read as ANNM and
    /// written as CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// CSV input has a header row.
    #[arg(long)]
    header: bool,
    /// 0-based CSV column holding class labels.
    #[arg(long)]
    label_column: Option<usize>,
    /// ANNL file written from the label column (CSV input) or read to
    /// prepend a label column (CSV output).
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BuildArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = rpforest::mrpt::DEFAULT_TREES)]
    trees: usize,
    /// Defaults to leaves of about max(4k, 100) points.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    vote: usize,
    /// Used only to pick the default depth.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Fraction of non-zero projection coordinates (default 1/sqrt(d)).
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TuneArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    recall: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = rpforest::mrpt::DEFAULT_TREES)]
    max_trees: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    validation_queries: Option<usize>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Tuning report (JSON); defaults to `<out>.tune.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SearcherArgs {
    #[arg(long, value_enum, default_value_t = Method::Exhaustive)]
    method: Method,
    /// Saved ANNI index (mrpt only); otherwise one is built or tuned.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Tune mrpt for this recall when no fixed parameters are given.
    #[arg(long, default_value_t = 0.85)]
    recall: f64,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    vote: Option<usize>,
    #[arg(long, default_value_t = rpforest::exact::DEFAULT_LEAF_CAPACITY)]
    leaf_capacity: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct QueryArgs {
    /// Indexed data (ANNM or CSV).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    searcher: SearcherArgs,
    /// Neighbor CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ClassifyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    searcher: SearcherArgs,
    /// Prediction CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Repeat to benchmark several methods (default: exhaustive and mrpt).
    #[arg(long = "method", value_enum)]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0.85)]
    recall: f64,
    /// Fixed forest instead of tuning (with --depth/--vote).
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    vote: Option<usize>,
    #[arg(long)]
    max_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    validation_queries: Option<usize>,
    #[arg(long, default_value_t = rpforest::exact::DEFAULT_LEAF_CAPACITY)]
    leaf_capacity: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,0.97")]
    targets: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    max_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    validation_queries: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// Failure classes mapped onto exit statuses.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<rpforest::Error> for Failure {
    fn from(e: rpforest::Error) -> Self {
        match e {
            rpforest::Error::Argument(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = rpforest::parallel::with_threads(cli.threads, || commands::run(&cli));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
