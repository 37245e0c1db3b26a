//! `transferop`: spectral analysis of dynamical operators from the command
//! line. Simulation, closed-form and iterative fits, ensembles, evaluation,
//! clustering, and a timing benchmark, all driven by a TOML config plus flag
//! overrides.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod report;

use transferop_core::CoreError;

/// Exit code 2: configuration or input validation failed.
/// Exit code 3: a numerical routine rejected the problem.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(CoreError),
}

impl CliError {
    pub fn validation(msg: String) -> Self {
        CliError::Validation(msg)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Numeric(e) => write!(f, "{e}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Numeric(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "transferop",
    version,
    about = "Learn spectral decompositions of Koopman, forward-backward, and Schrödinger operators from data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override one config key, e.g. --set data.m=5000 (repeatable).
    #[arg(long = "set", global = true, action = ArgAction::Append, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,

    /// Seed of the command's primary randomness (data for simulate, hidden
    /// weights for fit, base seed for ensemble, k-means for cluster).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads (falls back to TRANSFEROP_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a benchmark system and write the dataset files.
    Simulate(SimulateArgs),
    /// Closed-form spectral fit of a dataset.
    Fit(FitArgs),
    /// Iterative output-layer training followed by diagonalization.
    FitIterative(FitIterativeArgs),
    /// Fit an ensemble of models and summarize mean and uncertainty.
    Ensemble(EnsembleArgs),
    /// Evaluate a fitted model's functions on a grid or dataset.
    Eval(EvalArgs),
    /// Cluster data points in a model's spectral coordinates.
    Cluster(ClusterArgs),
    /// Time closed-form against iterative fits across systems.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub wells: Option<u32>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub lag_time: Option<f64>,
    #[arg(long)]
    pub lag_steps: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    /// eigen | singular | schrodinger
    #[arg(long)]
    pub mode: Option<String>,
    /// Number of spectral pairs to keep.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated layer widths, e.g. 256,512,256.
    #[arg(long)]
    pub widths: Option<String>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub rank_tol: Option<f64>,
    /// Disable the self-adjoint symmetrization of the cross-covariance.
    #[arg(long, action = ArgAction::SetTrue)]
    pub no_symmetrize: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset stem (written by `simulate`).
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct FitIterativeArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub train_step_size: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `fit`.
    pub model: PathBuf,
    /// Evaluate on this dataset stem instead of a grid.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Regular grid axis as lo:hi:count (repeat per dimension).
    #[arg(long, action = ArgAction::Append, allow_hyphen_values = true, value_name = "LO:HI:COUNT")]
    pub grid: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Keep the leading (constant) function in the embedding.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub include_first: bool,
    /// Scale each spectral coordinate by its eigenvalue magnitude.
    #[arg(long, action = ArgAction::SetTrue)]
    pub weighted: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated systems to benchmark.
    #[arg(long, default_value = "ou,lemon_slice,triple_well")]
    pub systems: String,
    /// Repetitions per cell; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
}

fn init_threads(cli_threads: Option<usize>) {
    let count = cli_threads.or_else(|| {
        std::env::var("TRANSFEROP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(count) = count {
        // Ignore the error when a pool already exists (tests call run_cli
        // repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(count.max(1))
            .build_global();
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through this path with code 0.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_threads(cli.threads);
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
