//! The `copf` command line: parse, solve, analyze, gen-data, train, screen
//! and bench.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use copf_core::moge::PredictorKind;
use copf_core::ModelKind;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "copf", version, about = "Convexified OPF solving, dual learning and constraint screening")]
pub struct Cli {
    /// TOML file overriding the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log to stderr; repeat for solver iterations.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CaseArgs {
    /// MATPOWER case file.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Problem model: qc or cdf.
    #[arg(long)]
    pub model: Option<ModelKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a case file and print a summary.
    Parse {
        #[arg(long)]
        case: Option<PathBuf>,
        /// Also write the canonical JSON form of the case.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Solve one instance and print the objective and KKT residuals.
    Solve {
        #[command(flatten)]
        case: CaseArgs,
        /// Instance file {"gamma": [...], "xi": [...]}; nominal if absent.
        #[arg(long)]
        gamma_xi: Option<PathBuf>,
        /// Write the primal-dual solution as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check LICQ, strong duality, value gradients and strict complementarity.
    Analyze {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        gamma_xi: Option<PathBuf>,
        /// Gradient entries to difference, per parameter block.
        #[arg(long, default_value_t = 5)]
        checks: usize,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        /// Report file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample parameter points and record optimal duals.
    GenData {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        k1: Option<usize>,
        #[arg(long)]
        k2: Option<usize>,
        /// Dataset size; phase 2 fills up to it.
        #[arg(long)]
        total: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a predictor on a dataset.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "moge")]
        model: PredictorKind,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Screen, solve and repair one instance.
    Screen {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        model_file: Option<PathBuf>,
        #[arg(long)]
        gamma_xi: Option<PathBuf>,
        /// moge|icnn|mgn|deep|ridge|oracle|all-bind; defaults to the model file's kind.
        #[arg(long)]
        predictor: Option<String>,
        /// Write the full screening result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare screened and full solves over a dataset's test split.
    Bench {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Model files; `oracle` and `all-bind` name the built-in predictors.
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write NA for every timing column, making the report reproducible.
        #[arg(long)]
        no_timing: bool,
        /// Run instances on the worker pool instead of one at a time.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        instances: Option<usize>,
        /// Write the per-instance report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn init_pool(jobs: Option<usize>) {
    let n = jobs
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1);
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
}

/// Runs one command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    init_pool(cli.jobs);
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
