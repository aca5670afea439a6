//! `qra`: fetch market data, build rolling point forecasts, backtest QRA
//! variants and evaluate quantile surfaces.
//!
//! Exit codes: 0 success, 1 other failure, 2 authentication, 3 network,
//! 4 parse or schema violation, 5 solver non-convergence.

pub mod commands;
pub mod settings;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const TOKEN_ENV: &str = "ENTSOE_SECURITY_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
    pub fn other(m: impl Into<String>) -> Self {
        Self::new(1, m)
    }
    pub fn usage(m: impl Into<String>) -> Self {
        Self::new(1, m)
    }
    pub fn auth(m: impl Into<String>) -> Self {
        Self::new(2, m)
    }
    pub fn network(m: impl Into<String>) -> Self {
        Self::new(3, m)
    }
    pub fn parse(m: impl Into<String>) -> Self {
        Self::new(4, m)
    }
    pub fn convergence(m: impl Into<String>) -> Self {
        Self::new(5, m)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "qra", version, about = "Probabilistic electricity price forecasting with QRA variants")]
pub struct Cli {
    /// TOML run configuration. Its values override command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download day-ahead prices (and the load forecast) from ENTSO-E.
    Fetch(FetchArgs),
    /// Rolling point forecasts and their accuracy per calibration window.
    Point(PointArgs),
    /// Rolling quantile backtest of one or more QRA variants.
    Backtest(BacktestArgs),
    /// Coverage, pinball score and LR tests of an existing surface CSV.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// EIC bidding-zone code.
    #[arg(long)]
    pub domain: Option<String>,
    /// First day (YYYY-MM-DD, inclusive).
    #[arg(long)]
    pub start: Option<String>,
    /// Last day (YYYY-MM-DD, exclusive).
    #[arg(long)]
    pub end: Option<String>,
    /// Output panel CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// API token; defaults to the ENTSOE_SECURITY_TOKEN environment variable.
    #[arg(long)]
    pub token: Option<String>,
    #[arg(long)]
    pub tz: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Prices only.
    #[arg(long)]
    pub no_load: bool,
    /// Interpolate positions missing from a period instead of failing.
    #[arg(long)]
    pub interpolate_missing: bool,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    /// Panel CSV (`datetime,price_da[,quantity]`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output point-forecast CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Calibration windows in days, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    /// Day lags, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
    /// Ignore the load forecast column.
    #[arg(long)]
    pub no_load: bool,
    /// One regression for all hours instead of one per hour.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub first_day: Option<String>,
    #[arg(long)]
    pub last_day: Option<String>,
    #[arg(long)]
    pub tz: Option<String>,
    /// `utc` or `market-local`.
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub scaler: Option<String>,
    #[arg(long)]
    pub vst: Option<String>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Point CSV with an `actual` column.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Variant names (comma separated) or ALL.
    #[arg(long, value_delimiter = ',')]
    pub variant: Option<Vec<String>>,
    /// Calibration window in days.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Quantile levels, comma separated (default: the 99 percentiles).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Leave crossing quantiles as fitted.
    #[arg(long)]
    pub no_repair: bool,
    /// Skip and log days whose fit fails instead of aborting.
    #[arg(long)]
    pub skip_failed: bool,
    #[arg(long)]
    pub factor_count: Option<usize>,
    /// L1 penalty of LQRA.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed bandwidth of SQRA/SQRM.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub prediction_days: Option<usize>,
    #[arg(long)]
    pub tz: Option<String>,
    /// Run on the bundled synthetic market instead of `--input`.
    #[arg(long)]
    pub seeded_demo: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub surface: Option<PathBuf>,
    #[arg(long)]
    pub actuals: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub significance: Option<f64>,
    #[arg(long)]
    pub tz: Option<String>,
}

/// Run a parsed command line; `token` is the environment fallback.
pub fn run(cli: Cli, env_token: Option<String>) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => settings::RunConfig::load(p)?,
        None => settings::RunConfig::default(),
    };
    let jobs = file.jobs.or(cli.jobs);
    qra_core::par::with_jobs(jobs, move || commands::dispatch(cli.command, &file, env_token))
}
