//! Command-line definitions and settings resolution.
//!
//! Shared settings come from three layers: explicit flags, then a `key=value` config
//! file, then built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tailrisk::backtest::{Strategy, TestMethod};
use tailrisk::riskmatrix::Mode;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "tailrisk", version, about = "Tail-risk network portfolios: VaR/ΔCoVaR risk matrices, centrality and pruning")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// Quantile level of the tail forecasts [default: 0.05]
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Rolling window length in periods [default: 250]
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// strict or permissive handling of out-of-range forecasts [default: permissive]
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Constrain portfolio weights to be nonnegative
    #[arg(long, global = true)]
    pub long_only: bool,
    /// Seed for simulation and bootstrap [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: .]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat key=value file with defaults for the flags above
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Return panel CSV (date, asset columns)
    #[arg(long)]
    pub panel: PathBuf,
    /// Macro predictor CSV on the same dates
    #[arg(long)]
    pub macros: PathBuf,
    /// Last date of the estimation window (default: last row)
    #[arg(long)]
    pub as_of: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit VaR and CoVaR quantile regressions on one window
    FitTails(DataArgs),
    /// Assemble the risk matrices and their spectrum
    BuildMatrix(DataArgs),
    /// Eigenvector centrality of the tail-risk network
    Centrality(DataArgs),
    /// Minimum-risk portfolio weights
    Optimize(DataArgs),
    /// Sequential removal of central assets while the Δ criterion is negative
    Prune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 2)]
        min_assets: usize,
        #[arg(long)]
        max_removals: Option<usize>,
    },
    /// Rolling out-of-sample evaluation
    Backtest {
        #[command(flatten)]
        data: DataArgs,
        /// full, most-central:K, least-central:K or prune
        #[arg(long, default_value = "full")]
        strategy: String,
        /// Series subtracted from portfolio returns (last column, one row per panel date)
        #[arg(long)]
        risk_free: Option<PathBuf>,
    },
    /// Test equality of two Sharpe ratios
    SharpeTest {
        /// First return series (last CSV column)
        #[arg(long)]
        x: PathBuf,
        /// Second return series (last CSV column)
        #[arg(long)]
        y: PathBuf,
        /// asymptotic, hac, iid or circular
        #[arg(long, default_value = "asymptotic")]
        method: String,
        #[arg(long, default_value_t = 1000)]
        replications: usize,
        /// Circular bootstrap block length (default: ⌈n^(1/3)⌉)
        #[arg(long)]
        block_length: Option<usize>,
    },
    /// Generate a synthetic panel and macro predictors
    Simulate {
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        t: usize,
        #[arg(long)]
        tail_strength: Option<f64>,
        #[arg(long)]
        tail_prob: Option<f64>,
        #[arg(long)]
        ar_coef: Option<f64>,
        /// Also run an in-sample sweep removing this many central assets
        #[arg(long)]
        sweep: Option<usize>,
    },
}

/// Shared settings after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub tau: f64,
    pub window: usize,
    pub mode: Mode,
    pub long_only: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            tau: 0.05,
            window: 250,
            mode: Mode::Permissive,
            long_only: false,
            seed: 0,
            out: PathBuf::from("."),
            threads: None,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| usage(format!("invalid value {value:?} for {key}")))
}

fn parse_mode(value: &str) -> Result<Mode, CliError> {
    value.parse().map_err(|e: tailrisk::Error| usage(e.to_string()))
}

/// Applies a config file on top of `base`.
pub fn apply_config(mut base: Settings, path: &Path, text: &str) -> Result<Settings, CliError> {
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}: line {}: expected key=value", path.display(), no + 1)))?;
        let (key, value) = (key.trim().replace('-', "_"), value.trim());
        match key.as_str() {
            "tau" => base.tau = parse_value(&key, value)?,
            "window" => base.window = parse_value(&key, value)?,
            "mode" => base.mode = parse_mode(value)?,
            "long_only" => base.long_only = parse_value(&key, value)?,
            "seed" => base.seed = parse_value(&key, value)?,
            "out" => base.out = PathBuf::from(value),
            "threads" => base.threads = Some(parse_value(&key, value)?),
            other => {
                return Err(usage(format!("{}: line {}: unknown key {other:?}", path.display(), no + 1)));
            }
        }
    }
    Ok(base)
}

pub fn resolve(global: &GlobalArgs) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(path) = &global.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Lib(tailrisk::Error::Io(format!("{}: {e}", path.display()))))?;
        s = apply_config(s, path, &text)?;
    }
    if let Some(t) = global.tau {
        s.tau = t;
    }
    if let Some(w) = global.window {
        s.window = w;
    }
    if let Some(m) = &global.mode {
        s.mode = parse_mode(m)?;
    }
    if global.long_only {
        s.long_only = true;
    }
    if let Some(seed) = global.seed {
        s.seed = seed;
    }
    if let Some(out) = &global.out {
        s.out = out.clone();
    }
    if let Some(t) = global.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        s.threads = Some(t);
    }
    Ok(s)
}

pub fn parse_strategy(s: &str) -> Result<Strategy, CliError> {
    let count = |v: &str| parse_value::<usize>("--strategy", v);
    match s.split_once(':') {
        None if s == "full" => Ok(Strategy::Full),
        None if s == "prune" => Ok(Strategy::Prune),
        Some(("most-central", k)) => Ok(Strategy::RemoveMostCentral(count(k)?)),
        Some(("least-central", k)) => Ok(Strategy::RemoveLeastCentral(count(k)?)),
        _ => Err(usage(format!(
            "unknown strategy {s:?} (expected full, most-central:K, least-central:K or prune)"
        ))),
    }
}

pub fn parse_method(s: &str) -> Result<TestMethod, CliError> {
    s.parse().map_err(|e: tailrisk::Error| usage(e.to_string()))
}
