//! Command-line front end: fit and cross-validate estimators on CSV data,
//! run the simulation benchmark, and print asymptotic constants.

mod commands;
mod config;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mmlasso", version, about = "Robust sparse regression with MM-Lasso estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator to a CSV file.
    Fit(FitArgs),
    /// Cross-validate the penalties of an estimator and report the criterion curves.
    Cv(FitArgs),
    /// Run the Monte Carlo benchmark for one scenario.
    Simulate(SimArgs),
    /// Print tuning and asymptotic constants.
    Constants(ConstArgs),
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// JSON file with default values for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Exit with status 0 even if some fit did not converge.
    #[arg(long)]
    pub allow_nonconverged: bool,
}

#[derive(Args, Clone, Default)]
pub struct FitArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Response column name (default: last column).
    #[arg(long)]
    pub response_col: Option<String>,
    /// mmlasso, adaptive-mmlasso, sridge, lslasso or adaptive-lslasso.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Fixed MM-Lasso (or LS-Lasso) penalty; cross-validated when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed adaptive penalty; cross-validated when omitted.
    #[arg(long)]
    pub iota: Option<f64>,
    /// Fixed S-Ridge penalty; cross-validated when omitted.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Fit without an intercept.
    #[arg(long)]
    pub no_intercept: bool,
    /// Skip median/MAD standardization of the carriers.
    #[arg(long)]
    pub no_standardize: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Clone, Default)]
pub struct SimArgs {
    /// Scenario id, 1 to 6.
    #[arg(long)]
    pub scenario: Option<u32>,
    /// normal, t3 or t1.
    #[arg(long)]
    pub errors: Option<String>,
    /// Add 10% high-leverage outliers to the training samples.
    #[arg(long)]
    pub contaminate: bool,
    /// Comma-separated outlier sizes (implies --contaminate).
    #[arg(long, value_delimiter = ',')]
    pub y0_grid: Option<Vec<f64>>,
    /// Number of replications.
    #[arg(long = "M", alias = "replications")]
    pub m: Option<usize>,
    /// Comma-separated estimator keys (default: all applicable).
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Clone, Default)]
pub struct ConstArgs {
    /// normal, t3 or t1.
    #[arg(long)]
    pub errors: Option<String>,
    /// Standard deviation of normal errors.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Breakdown point of the M-scale.
    #[arg(long)]
    pub b: Option<f64>,
    /// Normal efficiency of the MM step.
    #[arg(long)]
    pub efficiency: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(a) => commands::fit(a, false),
        Command::Cv(a) => commands::fit(a, true),
        Command::Simulate(a) => commands::simulate(a),
        Command::Constants(a) => commands::constants(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
