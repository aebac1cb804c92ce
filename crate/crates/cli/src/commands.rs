//! Subcommand implementations: load inputs, call the library, write artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use tailrisk::backtest::{self, BacktestConfig, SharpeTestOptions, TestMethod};
use tailrisk::io::{self, fmt_num};
use tailrisk::netgraph;
use tailrisk::portfolio::{self, PruneConfig, StopReason};
use tailrisk::riskmatrix::{self, RiskMatrix, TailForecastSet};
use tailrisk::simulate::{self, SimulationSpec};
use tailrisk::{Error, ReturnPanel};

use crate::CliError;
use crate::args::{self, Cli, Command, DataArgs, Settings};

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    let settings = args::resolve(&cli.global)?;
    if let Some(threads) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&settings.out)
        .map_err(|e| Error::Io(format!("{}: {e}", settings.out.display())))?;
    match cli.command {
        Command::FitTails(data) => fit_tails(&settings, &data),
        Command::BuildMatrix(data) => build_matrix(&settings, &data),
        Command::Centrality(data) => centrality(&settings, &data),
        Command::Optimize(data) => optimize(&settings, &data),
        Command::Prune { data, min_assets, max_removals } => prune(&settings, &data, min_assets, max_removals),
        Command::Backtest { data, strategy, risk_free } => {
            backtest(&settings, &data, &strategy, risk_free.as_deref())
        }
        Command::SharpeTest { x, y, method, replications, block_length } => {
            sharpe_test(&settings, &x, &y, &method, replications, block_length)
        }
        Command::Simulate { n, k, t, tail_strength, tail_prob, ar_coef, sweep } => {
            let defaults = SimulationSpec::default();
            let spec = SimulationSpec {
                n_assets: n,
                n_predictors: k,
                horizon: t,
                seed: settings.seed,
                tail_strength: tail_strength.unwrap_or(defaults.tail_strength),
                tail_prob: tail_prob.unwrap_or(defaults.tail_prob),
                ar_coef: ar_coef.unwrap_or(defaults.ar_coef),
                ..defaults
            };
            simulate(&settings, &spec, sweep)
        }
    }
}

fn out_path(s: &Settings, name: &str) -> PathBuf {
    s.out.join(name)
}

fn write_summary(s: &Settings, text: &str) -> CliResult<()> {
    print!("{text}");
    io::write_file(&out_path(s, "summary.txt"), text)?;
    Ok(())
}

/// One estimation window of the input panel.
struct Window {
    panel: ReturnPanel,
    /// Row index of the last observation in the window.
    end: usize,
    tails: TailForecastSet,
}

impl Window {
    fn load(s: &Settings, data: &DataArgs) -> CliResult<Window> {
        let panel = io::read_panel(&data.panel)?;
        let macros = io::read_panel(&data.macros)?;
        let end = match &data.as_of {
            None => panel.n_periods() - 1,
            Some(d) => panel.dates.iter().position(|x| x.to_string() == *d).ok_or_else(|| {
                Error::Domain(format!("date {d} not found in {}", data.panel.display()))
            })?,
        };
        info!("fitting tails on {} rows ending {}", s.window, panel.dates[end]);
        let tails = riskmatrix::forecast_tails(&panel, &macros, s.tau, s.window, end, s.mode)?;
        Ok(Window { panel, end, tails })
    }

    fn risk_matrix(&self, s: &Settings) -> CliResult<RiskMatrix> {
        Ok(riskmatrix::build_gamma(&self.tails)?.validate_pd(s.mode)?)
    }

    fn ids(&self) -> &[String] {
        &self.panel.asset_ids
    }

    /// Mean return of each asset over the rows of the estimation window.
    fn mean_returns(&self, window: usize) -> Vec<f64> {
        let first = self.end + 1 - window.min(self.end + 1);
        let rows = self.panel.values.rows(first, self.end + 1 - first);
        (0..self.panel.n_assets()).map(|i| rows.column(i).mean()).collect()
    }

    fn header(&self, s: &Settings) -> String {
        format!(
            "as of {} | window {} | tau {} | mode {} | assets {}\n",
            self.panel.dates[self.end],
            s.window,
            s.tau,
            format!("{:?}", s.mode).to_lowercase(),
            self.panel.n_assets()
        )
    }
}

fn fit_tails(s: &Settings, data: &DataArgs) -> CliResult<()> {
    let w = Window::load(s, data)?;
    io::write_labeled_vector(&out_path(s, "var_plus.csv"), w.ids(), "var_plus", w.tails.var_plus.as_slice())?;
    io::write_matrix(&out_path(s, "delta_covar.csv"), w.ids(), &w.tails.delta_covar)?;
    let mut text = w.header(s);
    let _ = writeln!(text, "clamped VaR+ entries: {}", w.tails.clamped);
    write_summary(s, &text)
}

fn build_matrix(s: &Settings, data: &DataArgs) -> CliResult<()> {
    let w = Window::load(s, data)?;
    let rm = w.risk_matrix(s)?;
    io::write_matrix(&out_path(s, "gamma.csv"), w.ids(), rm.gamma())?;
    io::write_matrix(&out_path(s, "gamma_sym.csv"), w.ids(), rm.gamma_sym())?;
    let mut eig = String::from("eigenvalue\n");
    for v in rm.eigenvalues()?.iter() {
        let _ = writeln!(eig, "{}", fmt_num(*v));
    }
    io::write_file(&out_path(s, "eigenvalues.csv"), &eig)?;
    let mut text = w.header(s);
    let _ = writeln!(text, "condition number: {}", fmt_num(rm.condition_number()?));
    let _ = writeln!(text, "eigenvalue floor applied: {}", rm.floored());
    let _ = writeln!(text, "clamped VaR+ entries: {}", w.tails.clamped);
    write_summary(s, &text)
}

fn centrality(s: &Settings, data: &DataArgs) -> CliResult<()> {
    let w = Window::load(s, data)?;
    let rm = w.risk_matrix(s)?;
    let c = netgraph::eigen_centrality(&netgraph::adjacency(&rm))?;
    io::write_labeled_vector(&out_path(s, "centrality.csv"), w.ids(), "centrality", c.values.as_slice())?;
    let mut text = w.header(s);
    let _ = writeln!(text, "leading eigenvalue: {}", fmt_num(c.leading_eigenvalue));
    let _ = writeln!(text, "most central: {}", w.ids()[c.argmax()]);
    let _ = writeln!(text, "least central: {}", w.ids()[c.argmin()]);
    if c.non_perron {
        let _ = writeln!(text, "warning: leading eigenvector has negative entries");
    }
    write_summary(s, &text)
}

fn optimize(s: &Settings, data: &DataArgs) -> CliResult<()> {
    let w = Window::load(s, data)?;
    let rm = w.risk_matrix(s)?;
    let wv = if s.long_only { portfolio::gmvp_long_only(&rm)? } else { portfolio::gmvp(&rm)? };
    let full = wv.expand(rm.n());
    io::write_labeled_vector(&out_path(s, "weights.csv"), w.ids(), "weight", full.as_slice())?;
    let risk = portfolio::portfolio_risk(&rm, &full)?;
    let mut text = w.header(s);
    let _ = writeln!(text, "long-only: {}", s.long_only);
    let _ = writeln!(text, "Q total: {}", fmt_num(risk.total));
    let _ = writeln!(text, "Q network: {}", fmt_num(risk.network_part));
    let _ = writeln!(text, "Q idiosyncratic: {}", fmt_num(risk.idiosyncratic_part));
    write_summary(s, &text)
}

fn prune(s: &Settings, data: &DataArgs, min_assets: usize, max_removals: Option<usize>) -> CliResult<()> {
    let w = Window::load(s, data)?;
    let rm = w.risk_matrix(s)?;
    let cfg = PruneConfig { min_assets, max_removals, long_only: s.long_only };
    let trace = portfolio::prune(&rm, cfg)?;
    let mean = w.mean_returns(s.window);
    let ids = w.ids();

    let mut csv = String::from("Exclusions,r_p,Q,Delta,candidate,removed\n");
    for (k, step) in trace.steps.iter().enumerate() {
        let wa = &step.weights_after;
        let r_p: f64 = wa.assets.iter().zip(wa.weights.iter()).map(|(&a, x)| x * mean[a]).sum();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            k + 1,
            fmt_num(r_p),
            fmt_num(step.risk_after),
            fmt_num(step.delta),
            ids[step.candidate],
            step.removed.is_some()
        );
    }
    io::write_file(&out_path(s, "trace.csv"), &csv)?;
    let full = trace.final_weights.expand(rm.n());
    io::write_labeled_vector(&out_path(s, "weights.csv"), ids, "weight", full.as_slice())?;

    let mut text = w.header(s);
    let removed: Vec<&str> = trace.steps.iter().filter_map(|st| st.removed).map(|i| ids[i].as_str()).collect();
    let _ = writeln!(text, "removed ({}): {}", removed.len(), removed.join(" "));
    let _ = writeln!(text, "stopped: {}", stop_label(trace.stop));
    let q = portfolio::portfolio_risk(&rm, &full)?.total;
    let _ = writeln!(text, "final assets: {} | Q: {}", trace.final_assets.len(), fmt_num(q));
    write_summary(s, &text)
}

fn stop_label(stop: StopReason) -> &'static str {
    match stop {
        StopReason::DeltaNonNegative => "delta non-negative",
        StopReason::MinAssets => "minimum asset count reached",
        StopReason::MaxRemovals => "removal budget exhausted",
        StopReason::TooFewAssets => "too few assets for delta",
    }
}

fn backtest(s: &Settings, data: &DataArgs, strategy: &str, risk_free: Option<&Path>) -> CliResult<()> {
    if data.as_of.is_some() {
        return Err(CliError::Usage("--as-of does not apply to backtest".into()));
    }
    let strategy = args::parse_strategy(strategy)?;
    let panel = io::read_panel(&data.panel)?;
    let macros = io::read_panel(&data.macros)?;
    let risk_free = risk_free.map(io::read_series).transpose()?;
    let cfg = BacktestConfig { window: s.window, tau: s.tau, strategy, mode: s.mode, long_only: s.long_only, risk_free };
    let report = backtest::rolling_backtest(&panel, &macros, &cfg)?;

    let mut returns = String::from("date,return\n");
    for (d, r) in report.dates.iter().zip(&report.returns) {
        let _ = writeln!(returns, "{d},{}", fmt_num(*r));
    }
    io::write_file(&out_path(s, "returns.csv"), &returns)?;

    let mut weights = format!("date,{}\n", panel.asset_ids.join(","));
    for rec in &report.weights {
        let cells: Vec<String> = rec.weights.iter().map(|&x| fmt_num(x)).collect();
        let _ = writeln!(weights, "{},{}", rec.date, cells.join(","));
    }
    io::write_file(&out_path(s, "weights.csv"), &weights)?;

    let label = match strategy {
        backtest::Strategy::Full => "full".to_string(),
        backtest::Strategy::RemoveMostCentral(k) => format!("most-{k}"),
        backtest::Strategy::RemoveLeastCentral(k) => format!("least-{k}"),
        backtest::Strategy::Prune => "prune".to_string(),
    };
    let mut text = backtest::format_summary_table(&[(label.as_str(), report.summary)]);
    let clamped: usize = report.weights.iter().map(|r| r.clamped).sum();
    let floored = report.weights.iter().filter(|r| r.floored).count();
    if clamped > 0 || floored > 0 {
        let _ = writeln!(text, "permissive repairs: {clamped} clamped VaR+ entries, {floored} floored windows");
    }
    write_summary(s, &text)
}

fn sharpe_test(
    s: &Settings,
    x: &Path,
    y: &Path,
    method: &str,
    replications: usize,
    block_length: Option<usize>,
) -> CliResult<()> {
    let method = args::parse_method(method)?;
    if block_length.is_some() && method != TestMethod::CircularBootstrap {
        return Err(CliError::Usage("--block-length requires --method circular".into()));
    }
    let xs = io::read_series(x)?;
    let ys = io::read_series(y)?;
    let opts = SharpeTestOptions { method, replications, block_length, seed: s.seed };
    let res = backtest::sharpe_test(&xs, &ys, &opts)?;
    let mut text = String::new();
    let _ = writeln!(text, "method: {}", res.method);
    let _ = writeln!(text, "n: {}", xs.len());
    let _ = writeln!(text, "sr_x: {}", fmt_num(res.sr_x));
    let _ = writeln!(text, "sr_y: {}", fmt_num(res.sr_y));
    let _ = writeln!(text, "difference: {}", fmt_num(res.difference));
    let _ = writeln!(text, "std_error: {}", fmt_num(res.std_error));
    let _ = writeln!(text, "t_stat: {}", fmt_num(res.t_stat));
    let _ = writeln!(text, "p_value: {}", fmt_num(res.p_value));
    if let Some(b) = res.replications {
        let _ = writeln!(text, "replications: {b}");
    }
    if let Some(l) = res.block_length {
        let _ = writeln!(text, "block_length: {l}");
    }
    write_summary(s, &text)
}

fn simulate(s: &Settings, spec: &SimulationSpec, sweep: Option<usize>) -> CliResult<()> {
    let (panel, macros) = simulate::generate(spec)?;
    io::write_panel(&out_path(s, "panel.csv"), &panel)?;
    io::write_panel(&out_path(s, "macros.csv"), &macros)?;
    let mut text = format!(
        "simulated {} periods of {} assets and {} predictors (seed {})\n",
        spec.horizon, spec.n_assets, spec.n_predictors, spec.seed
    );
    if let Some(e) = sweep {
        let rows = simulate::simulation_sweep(spec, s.tau, e, s.mode, s.long_only)?;
        let mut csv = String::from("Exclusions,r_p,Q,Delta,removed\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                r.exclusions,
                fmt_num(r.r_p),
                fmt_num(r.q),
                fmt_num(r.delta),
                panel.asset_ids[r.removed]
            );
        }
        io::write_file(&out_path(s, "trace.csv"), &csv)?;
        text.push_str(&portfolio::format_sweep_table(&rows));
    }
    write_summary(s, &text)
}
