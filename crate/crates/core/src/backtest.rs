//! Rolling-window out-of-sample evaluation and Sharpe-ratio inference.

use std::fmt::Write as _;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_tau, Error, Result};
use crate::netgraph;
use crate::panel::ReturnPanel;
use crate::portfolio::{self, PruneConfig, WeightVector};
use crate::riskmatrix::{self, Mode, RiskMatrix};

/// Portfolio rule applied to each window's risk matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Minimum-risk portfolio on all assets.
    Full,
    /// Drop the given number of most central assets, then optimize.
    RemoveMostCentral(usize),
    /// Drop the given number of least central assets, then optimize.
    RemoveLeastCentral(usize),
    /// Sequential Δ-criterion pruning.
    Prune,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// Rolling window length κ.
    pub window: usize,
    pub tau: f64,
    pub strategy: Strategy,
    pub mode: Mode,
    pub long_only: bool,
    /// Per-period rate subtracted from portfolio returns, aligned with the panel rows.
    pub risk_free: Option<Vec<f64>>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            window: 250,
            tau: 0.05,
            strategy: Strategy::Full,
            mode: Mode::Strict,
            long_only: false,
            risk_free: None,
        }
    }
}

/// Weights chosen at the end of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRecord {
    /// Last date inside the window.
    pub date: NaiveDate,
    /// Universe-length weights, zero for excluded assets.
    pub weights: DVector<f64>,
    pub clamped: usize,
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    /// Dates of the out-of-sample returns.
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub weights: Vec<WeightRecord>,
    pub summary: SummaryStats,
}

/// Re-estimates the risk matrix on every window and records the next-period portfolio
/// return `r_{t+1} = w_t'R_{t+1}`.
///
/// Windows are evaluated in parallel; the report is assembled in time order.
pub fn rolling_backtest(panel: &ReturnPanel, macros: &ReturnPanel, cfg: &BacktestConfig) -> Result<BacktestReport> {
    check_tau(cfg.tau)?;
    panel.check_aligned(macros)?;
    let (t_len, n) = (panel.n_periods(), panel.n_assets());
    if cfg.window == 0 || cfg.window >= t_len {
        return Err(Error::InsufficientData(format!(
            "window {} needs fewer rows than the panel's {t_len}",
            cfg.window
        )));
    }
    match cfg.strategy {
        Strategy::RemoveMostCentral(k) | Strategy::RemoveLeastCentral(k) if k >= n => {
            return Err(Error::Domain(format!("cannot remove {k} of {n} assets")));
        }
        _ => {}
    }
    if let Some(rf) = &cfg.risk_free {
        if rf.len() != t_len {
            return Err(Error::Dimension(format!("{} risk-free rates for {t_len} periods", rf.len())));
        }
    }

    let ends: Vec<usize> = (cfg.window - 1..t_len - 1).collect();
    let records: Vec<Result<WeightRecord>> = ends
        .par_iter()
        .map(|&end| {
            window_weights(panel, macros, cfg, end).map_err(|e| e.context(format!("window ending {}", panel.dates[end])))
        })
        .collect();

    let mut weights = Vec::with_capacity(ends.len());
    let mut returns = Vec::with_capacity(ends.len());
    let mut dates = Vec::with_capacity(ends.len());
    for (&end, rec) in ends.iter().zip(records) {
        let rec = rec?;
        let next = end + 1;
        let mut r: f64 = (0..n).map(|i| rec.weights[i] * panel.values[(next, i)]).sum();
        if let Some(rf) = &cfg.risk_free {
            r -= rf[next];
        }
        returns.push(r);
        dates.push(panel.dates[next]);
        weights.push(rec);
    }
    let summary = summary_stats(&returns)?;
    Ok(BacktestReport { dates, returns, weights, summary })
}

fn window_weights(panel: &ReturnPanel, macros: &ReturnPanel, cfg: &BacktestConfig, end: usize) -> Result<WeightRecord> {
    let n = panel.n_assets();
    let tails = riskmatrix::forecast_tails(panel, macros, cfg.tau, cfg.window, end, cfg.mode)?;
    let rm = riskmatrix::build_gamma(&tails)?.validate_pd(cfg.mode)?;
    if rm.floored() {
        log::info!("window ending {}: risk matrix floored", panel.dates[end]);
    }
    let w = strategy_weights(&rm, cfg.strategy, cfg.long_only)?;
    Ok(WeightRecord { date: panel.dates[end], weights: w.expand(n), clamped: tails.clamped, floored: rm.floored() })
}

/// Applies `strategy` to a validated risk matrix.
pub fn strategy_weights(rm: &RiskMatrix, strategy: Strategy, long_only: bool) -> Result<WeightVector> {
    let solve = |m: &RiskMatrix| if long_only { portfolio::gmvp_long_only(m) } else { portfolio::gmvp(m) };
    match strategy {
        Strategy::Full => solve(rm),
        Strategy::RemoveMostCentral(k) | Strategy::RemoveLeastCentral(k) => {
            let n = rm.n();
            if k >= n {
                return Err(Error::Domain(format!("cannot remove {k} of {n} assets")));
            }
            let v = netgraph::eigen_centrality(&netgraph::adjacency(rm))?.values;
            let mut order: Vec<usize> = (0..n).collect();
            if matches!(strategy, Strategy::RemoveMostCentral(_)) {
                order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
            } else {
                order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
            }
            let mut keep: Vec<usize> = order[k..].to_vec();
            keep.sort_unstable();
            let mode = if rm.floored() { Mode::Permissive } else { Mode::Strict };
            let sub = rm.restrict(&keep, mode)?;
            let mut w = solve(&sub)?;
            w.assets = keep;
            Ok(w)
        }
        Strategy::Prune => {
            let cfg = PruneConfig { long_only, ..PruneConfig::default() };
            Ok(portfolio::prune(rm, cfg)?.final_weights)
        }
    }
}

/// Mean over standard deviation, with the variance divided by `n − 1`.
pub fn sharpe(returns: &[f64]) -> Result<f64> {
    let n = returns.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("Sharpe ratio needs 2 returns, got {n}")));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if returns.iter().all(|&r| r == returns[0]) || !(var > 0.0) {
        return Err(Error::Degenerate("returns have zero variance; Sharpe ratio undefined".into()));
    }
    Ok(mean / var.sqrt())
}

/// Distribution summary of a return series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub t: usize,
    pub mean: f64,
    pub sd: f64,
    pub sr: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn summary_stats(returns: &[f64]) -> Result<SummaryStats> {
    let n = returns.len();
    if n == 0 {
        return Err(Error::InsufficientData("no returns to summarize".into()));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let sr = if sd > 0.0 { mean / sd } else { f64::NAN };
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        t: n,
        mean,
        sd,
        sr,
        min: sorted[0],
        q1: quantile7(&sorted, 0.25),
        median: quantile7(&sorted, 0.5),
        q3: quantile7(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

/// Linear-interpolation sample quantile on sorted data (Hyndman–Fan type 7).
fn quantile7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Header and one row per labelled series, columns T, Mean, SD, SR, Min, Q1, Median,
/// Q3, Max.
pub fn format_summary_table(rows: &[(&str, SummaryStats)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "", "T", "Mean", "SD", "SR", "Min", "Q1", "Median", "Q3", "Max"
    );
    for (label, s) in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            label, s.t, s.mean, s.sd, s.sr, s.min, s.q1, s.median, s.q3, s.max
        );
    }
    out
}

/// Inference method for the Sharpe-ratio difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    /// Delta method with an i.i.d. moment covariance.
    Asymptotic,
    /// Delta method with a Newey–West (Bartlett) moment covariance.
    Hac,
    /// Paired i.i.d. bootstrap of the studentized difference.
    IidBootstrap,
    /// Paired circular block bootstrap of the studentized difference.
    CircularBootstrap,
}

impl std::str::FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymptotic" => Ok(TestMethod::Asymptotic),
            "hac" => Ok(TestMethod::Hac),
            "iid" | "iid-bootstrap" | "iid_bootstrap" => Ok(TestMethod::IidBootstrap),
            "circular" | "circular-bootstrap" | "circular_bootstrap" => Ok(TestMethod::CircularBootstrap),
            other => Err(Error::Domain(format!("unknown test method {other:?}"))),
        }
    }
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestMethod::Asymptotic => "asymptotic",
            TestMethod::Hac => "hac",
            TestMethod::IidBootstrap => "iid_bootstrap",
            TestMethod::CircularBootstrap => "circular_bootstrap",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpeTestOptions {
    pub method: TestMethod,
    /// Bootstrap replications (at least 100).
    pub replications: usize,
    /// Circular block length; `None` uses `⌈n^{1/3}⌉`.
    pub block_length: Option<usize>,
    pub seed: u64,
}

impl Default for SharpeTestOptions {
    fn default() -> Self {
        SharpeTestOptions { method: TestMethod::Asymptotic, replications: 1000, block_length: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpeTestResult {
    pub sr_x: f64,
    pub sr_y: f64,
    pub difference: f64,
    pub method: TestMethod,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub replications: Option<usize>,
    pub block_length: Option<usize>,
}

/// Tests `H0: SR_x = SR_y` for two paired return series.
///
/// The standard error comes from the delta method applied to the first and second
/// moments of both series. Bootstrap p-values are
/// `(1 + #{|t*| ≥ |t|}) / (B + 1)` with `t* = (Δ* − Δ) / se*`.
pub fn sharpe_test(x: &[f64], y: &[f64], opts: &SharpeTestOptions) -> Result<SharpeTestResult> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::Dimension(format!("series lengths differ: {n} vs {}", y.len())));
    }
    if n < 10 {
        return Err(Error::InsufficientData(format!("Sharpe test needs at least 10 paired returns, got {n}")));
    }
    let sr_x = sharpe(x)?;
    let sr_y = sharpe(y)?;
    let difference = sr_x - sr_y;
    let block = match opts.method {
        TestMethod::CircularBootstrap => {
            let b = opts.block_length.unwrap_or_else(|| default_block_length(n));
            if b == 0 || b > n {
                return Err(Error::Domain(format!("block length {b} must lie in [1, {n}]")));
            }
            Some(b)
        }
        _ => None,
    };
    let bootstrap = matches!(opts.method, TestMethod::IidBootstrap | TestMethod::CircularBootstrap);
    if bootstrap && opts.replications < 100 {
        return Err(Error::Domain(format!("bootstrap needs at least 100 replications, got {}", opts.replications)));
    }

    let psi = match opts.method {
        TestMethod::Asymptotic | TestMethod::IidBootstrap => moment_cov_iid(x, y),
        TestMethod::Hac => moment_cov_hac(x, y, newey_west_lag(n)),
        TestMethod::CircularBootstrap => moment_cov_blocks(x, y, block.unwrap_or(1)),
    };
    let std_error = delta_se(x, y, &psi);
    let (t_stat, normal_p) = if difference == 0.0 {
        (0.0, 1.0)
    } else {
        let t = difference / std_error;
        (t, 2.0 * (1.0 - std_normal().cdf(t.abs())))
    };

    let p_value = if bootstrap {
        if difference == 0.0 {
            1.0
        } else {
            let stats = bootstrap_t_stats(x, y, difference, opts.replications, block, opts.seed);
            let exceed = stats.iter().filter(|t| t.abs() >= t_stat.abs()).count();
            (1 + exceed) as f64 / (opts.replications + 1) as f64
        }
    } else {
        normal_p
    };
    Ok(SharpeTestResult {
        sr_x,
        sr_y,
        difference,
        method: opts.method,
        std_error,
        t_stat,
        p_value,
        replications: bootstrap.then_some(opts.replications),
        block_length: block,
    })
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// `⌈n^{1/3}⌉`.
pub fn default_block_length(n: usize) -> usize {
    let b = (n as f64).cbrt().ceil() as usize;
    // Guard against cbrt rounding just above an exact cube.
    if b > 1 && (b - 1).pow(3) >= n {
        b - 1
    } else {
        b.max(1)
    }
}

/// `⌊4 (n/100)^{2/9}⌋`.
pub fn newey_west_lag(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Centered moment vectors `(x − μx, y − μy, x² − γx, y² − γy)`.
fn moment_deviations(x: &[f64], y: &[f64]) -> Vec<Vector4<f64>> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let gx = x.iter().map(|v| v * v).sum::<f64>() / n;
    let gy = y.iter().map(|v| v * v).sum::<f64>() / n;
    x.iter()
        .zip(y)
        .map(|(a, b)| Vector4::new(a - mx, b - my, a * a - gx, b * b - gy))
        .collect()
}

fn moment_cov_iid(x: &[f64], y: &[f64]) -> Matrix4<f64> {
    let d = moment_deviations(x, y);
    let n = d.len() as f64;
    d.iter().fold(Matrix4::zeros(), |acc, v| acc + v * v.transpose()) / n
}

/// Newey–West estimator with Bartlett weights `1 − j/(L+1)`.
fn moment_cov_hac(x: &[f64], y: &[f64], lag: usize) -> Matrix4<f64> {
    let d = moment_deviations(x, y);
    let n = d.len();
    let mut psi = d.iter().fold(Matrix4::zeros(), |acc, v| acc + v * v.transpose()) / n as f64;
    for j in 1..=lag.min(n - 1) {
        let gamma_j = (j..n).fold(Matrix4::zeros(), |acc, t| acc + d[t] * d[t - j].transpose()) / n as f64;
        let w = 1.0 - j as f64 / (lag + 1) as f64;
        psi += (gamma_j + gamma_j.transpose()) * w;
    }
    psi
}

/// Batch-means estimator over non-overlapping blocks of length `b`:
/// `(1/ℓ) Σ_j ζ_j ζ_j'` with `ζ_j = b^{-1/2} Σ_{t ∈ block j} d_t`.
fn moment_cov_blocks(x: &[f64], y: &[f64], b: usize) -> Matrix4<f64> {
    let d = moment_deviations(x, y);
    let blocks = d.len() / b;
    let scale = 1.0 / (b as f64).sqrt();
    let mut psi = Matrix4::zeros();
    for j in 0..blocks {
        let zeta = d[j * b..(j + 1) * b].iter().fold(Vector4::zeros(), |acc, v| acc + v) * scale;
        psi += zeta * zeta.transpose();
    }
    psi / blocks as f64
}

/// `sqrt(∇f' Ψ ∇f / n)` for `f(μx, μy, γx, γy) = μx/√(γx − μx²) − μy/√(γy − μy²)`.
fn delta_se(x: &[f64], y: &[f64], psi: &Matrix4<f64>) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let gx = x.iter().map(|v| v * v).sum::<f64>() / n;
    let gy = y.iter().map(|v| v * v).sum::<f64>() / n;
    let vx = (gx - mx * mx).powf(1.5);
    let vy = (gy - my * my).powf(1.5);
    let grad = Vector4::new(gx / vx, -gy / vy, -mx / (2.0 * vx), my / (2.0 * vy));
    ((grad.transpose() * psi * grad)[(0, 0)].max(0.0) / n).sqrt()
}

/// Resampled index sets: i.i.d. draws, or wrapped blocks of length `b` from uniform
/// starting points. With `b = 1` both consume the generator identically.
fn resample_indices(rng: &mut ChaCha8Rng, n: usize, block: Option<usize>) -> Vec<usize> {
    match block {
        None => (0..n).map(|_| rng.random_range(0..n)).collect(),
        Some(b) => {
            let mut idx = Vec::with_capacity(n + b);
            while idx.len() < n {
                let start = rng.random_range(0..n);
                idx.extend((0..b).map(|j| (start + j) % n));
            }
            idx.truncate(n);
            idx
        }
    }
}

/// Studentized bootstrap statistics `(Δ* − Δ) / se*`, one generator stream per
/// replication so results do not depend on the thread count.
pub fn bootstrap_t_stats(x: &[f64], y: &[f64], difference: f64, replications: usize, block: Option<usize>, seed: u64) -> Vec<f64> {
    let n = x.len();
    (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let idx = resample_indices(&mut rng, n, block);
            let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let (Ok(sx), Ok(sy)) = (sharpe(&xs), sharpe(&ys)) else {
                return f64::NAN;
            };
            let psi = match block {
                None => moment_cov_iid(&xs, &ys),
                Some(b) => moment_cov_blocks(&xs, &ys, b),
            };
            let se = delta_se(&xs, &ys, &psi);
            if se > 0.0 {
                (sx - sy - difference) / se
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// Column-stacked weight records, one row per window.
pub fn weight_matrix(report: &BacktestReport) -> DMatrix<f64> {
    let n = report.weights.first().map_or(0, |w| w.weights.len());
    DMatrix::from_fn(report.weights.len(), n, |r, c| report.weights[r].weights[c])
}
