use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "stacked-rmst",
    version,
    about = "Restricted mean survival time effects from stacked survival models"
)]
pub struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More output: progress for `simulate`, stacking diagnostics for `fit`.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo study over the benchmark scenarios.
    Simulate(SimulateArgs),
    /// Effect estimates with bootstrap intervals for a CSV data set.
    Fit(FitArgs),
    /// True effects of the benchmark scenarios by Monte Carlo.
    Oracle(OracleArgs),
    /// Summary table from one or more record files.
    Report(ReportArgs),
}

/// Stacking options shared by `simulate` and `fit`.
#[derive(Debug, Args)]
pub struct StackArgs {
    /// Bootstrap replicates.
    #[arg(long = "B", value_name = "B")]
    pub bootstrap: Option<usize>,

    /// Cross-fitting folds.
    #[arg(long)]
    pub folds: Option<usize>,

    /// Brier time grid size.
    #[arg(long)]
    pub grid_size: Option<usize>,

    /// Candidate families: weibull, lognormal, cox-linear, cox-spline.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Vec<String>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario ids, 1 to 4.
    #[arg(long, value_delimiter = ',')]
    pub scenario: Vec<u8>,

    /// Subjects per replication.
    #[arg(long)]
    pub n: Option<usize>,

    /// Replications per scenario.
    #[arg(long)]
    pub nsim: Option<usize>,

    /// Index of the first replication, for sharded runs.
    #[arg(long)]
    pub first_rep: Option<u64>,

    /// Horizons.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,

    /// Covariate draws for the truth values.
    #[arg(long)]
    pub oracle_draws: Option<usize>,

    /// Points of the ISSE integration grid.
    #[arg(long)]
    pub isse_grid: Option<usize>,

    /// Read truth values from a `truths.csv` of an earlier run.
    #[arg(long, value_name = "FILE")]
    pub truths: Option<PathBuf>,

    /// Also write every replication's data set as CSV.
    #[arg(long)]
    pub emit_data: bool,

    #[command(flatten)]
    pub stack: StackArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with columns time, status, arm and covariates.
    pub input: PathBuf,

    /// Horizons.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,

    /// Horizon sweep `START:END:STEP`, both ends included.
    #[arg(long, value_name = "START:END:STEP")]
    pub sweep: Option<String>,

    /// Estimator: stacked or one of the candidate families.
    #[arg(long)]
    pub estimator: Option<String>,

    /// Event-time grid of the restricted mean: pooled or per-arm.
    #[arg(long)]
    pub event_grid: Option<String>,

    #[command(flatten)]
    pub stack: StackArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_delimiter = ',')]
    pub scenario: Vec<u8>,

    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,

    /// Covariate draws.
    #[arg(long)]
    pub draws: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Record files written by `simulate`.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}
