//! `inn`: command-line driver for interferometric network experiments.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::UsageError;

#[derive(Debug, Parser)]
#[command(name = "inn", version, about = "Interferometric neural network experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat key=value config file (e.g. `gan.lr=0.01`); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for every artifact of this run.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Global seed; named sub-streams are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write wall_ms as 0 so reruns produce byte-identical CSVs.
    #[arg(long, global = true)]
    pub omit_timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Variational QUBO solving.
    #[command(subcommand)]
    Qubo(QuboCommand),
    /// Image classification.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Interferometric GAN.
    #[command(subcommand)]
    Gan(GanCommand),
    /// Finite-difference gradient checks.
    Gradcheck,
    /// Numeric invariant suite.
    Selftest,
}

#[derive(Debug, Subcommand)]
pub enum QuboCommand {
    /// Solve seeded random instances and compare with exhaustive search.
    Bench(QuboBenchArgs),
    /// Solve one instance (sampled, or read from a matrix file).
    Solve(QuboSolveArgs),
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    /// xavier or uniform-pi.
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Debug, Args)]
pub struct QuboBenchArgs {
    /// uniform (integers in [-10, 10]) or normal.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub instances: Option<usize>,
    /// CSV file name inside the output directory.
    #[arg(long)]
    pub out: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct QuboSolveArgs {
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Whitespace-separated n×n matrix; overrides --dist/--n.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Subcommand)]
pub enum ClassifyCommand {
    Train(ClassifyTrainArgs),
    Eval(ClassifyEvalArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// mnist, fashion, or a directory with IDX files.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Directory holding the IDX files (defaults to data/<dataset>).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// `all` or a comma-separated list; two classes train a binary model
    /// with the first as the negative class.
    #[arg(long)]
    pub classes: Option<String>,
    /// Images are resized to size×size.
    #[arg(long)]
    pub size: Option<usize>,
    /// Center-crop instead of resizing.
    #[arg(long)]
    pub crop: bool,
    #[arg(long)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClassifyTrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Architecture, e.g. `d=256,64,10;L=2,2`.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassifyEvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GanCommand {
    Train(GanTrainArgs),
    Sample(GanSampleArgs),
}

#[derive(Debug, Args)]
pub struct GanTrainArgs {
    /// mnist, fashion, a directory with IDX files, or a PGM/PPM directory.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// 0-9 or all.
    #[arg(long)]
    pub digit: Option<String>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub arch_d: Option<String>,
    #[arg(long)]
    pub arch_g: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub data_size: Option<usize>,
    /// standard or wasserstein.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub init: Option<String>,
    /// Images in the final sample grid.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GanSampleArgs {
    /// Generator checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Display head tanh(3(2p-1)).
    #[arg(long)]
    pub contrast: bool,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// PGM file name inside the output directory.
    #[arg(long)]
    pub out: Option<String>,
}

pub enum Failure {
    Usage(UsageError),
    Run(anyhow::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<inn::InnError> for Failure {
    fn from(e: inn::InnError) -> Self {
        Failure::Run(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn configure_threads() -> Result<usize, UsageError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("INN_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| UsageError(format!("INN_THREADS must be a positive integer, got {raw:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build_global()
        .map_err(|e| UsageError(format!("cannot configure thread pool: {e}")))?;
    Ok(rayon::current_num_threads())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure_threads()
        .map_err(Failure::from)
        .and_then(|threads| commands::dispatch(&cli, threads));
    match result {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
