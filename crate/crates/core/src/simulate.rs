//! Synthetic return panels with macro predictors and lower-tail co-movement.
//!
//! Data generating process, for assets `i = 1..N` and predictors `j = 1..k`:
//!
//! ```text
//! M_{j,t} = φ M_{j,t−1} + √(1 − φ²) η_{j,t}
//! R_{i,t} = μ_i + b_i' M_{t−1} + σ_i ε_{i,t} − s ℓ_i D_t |c_t|
//! ```
//!
//! with `η, ε, c` independent standard normals, `D_t ~ Bernoulli(p)` a crash indicator
//! shared by all assets, loadings `ℓ_i` drawn once per panel and `s` the tail strength.
//! Outside crash periods assets are independent given the predictors, so the
//! dependence is concentrated in the lower tail. Setting `s = 0` gives independent
//! assets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_tau, Error, Result};
use crate::panel::ReturnPanel;
use crate::portfolio::{self, SweepRow};
use crate::riskmatrix::{self, Mode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec {
    pub n_assets: usize,
    pub n_predictors: usize,
    pub horizon: usize,
    pub seed: u64,
    /// AR(1) coefficient `φ` of every predictor, inside (−1, 1).
    pub ar_coef: f64,
    /// Standard deviation of the predictive coefficients `b_i`.
    pub predictive_scale: f64,
    /// Scale of the crash loadings `ℓ_i ~ loading_scale · U(0.5, 1.5)`.
    pub loading_scale: f64,
    /// Base idiosyncratic volatility; `σ_i ~ idio_vol · U(0.75, 1.25)`.
    pub idio_vol: f64,
    /// Crash size `s`; zero switches off cross-sectional dependence.
    pub tail_strength: f64,
    /// Crash probability `p` per period.
    pub tail_prob: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n_assets: 40,
            n_predictors: 7,
            horizon: 500,
            seed: 0,
            ar_coef: 0.5,
            predictive_scale: 0.002,
            loading_scale: 1.0,
            idio_vol: 0.02,
            tail_strength: 0.05,
            tail_prob: 0.05,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let (n, k, t) = (self.n_assets, self.n_predictors, self.horizon);
        if n < 2 || k < 1 {
            return Err(Error::Dimension(format!("need at least 2 assets and 1 predictor, got N={n}, k={k}")));
        }
        if t < n + k + 3 {
            return Err(Error::Dimension(format!("horizon T={t} must exceed N + k + 2 = {}", n + k + 2)));
        }
        if !(self.ar_coef.abs() < 1.0) {
            return Err(Error::Domain(format!("autoregressive coefficient {} must lie in (-1, 1)", self.ar_coef)));
        }
        let scales = [
            ("predictive_scale", self.predictive_scale),
            ("loading_scale", self.loading_scale),
            ("idio_vol", self.idio_vol),
            ("tail_strength", self.tail_strength),
        ];
        for (name, v) in scales {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.idio_vol > 0.0) {
            return Err(Error::Domain("idio_vol must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tail_prob) {
            return Err(Error::Domain(format!("tail_prob {} must lie in [0, 1]", self.tail_prob)));
        }
        Ok(())
    }
}

/// Returns `(returns, macros)` with ids `asset_i` and `macro_j` on a shared weekly
/// calendar. The output depends only on `spec`, seed included.
pub fn generate(spec: &SimulationSpec) -> Result<(ReturnPanel, ReturnPanel)> {
    spec.validate()?;
    let (n, k, t_len) = (spec.n_assets, spec.n_predictors, spec.horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let mu: Vec<f64> = (0..n).map(|_| 0.004 + 0.001 * normal()).collect();
    let b = DMatrix::from_fn(n, k, |_, _| spec.predictive_scale * normal());
    let mut uniform = ChaCha8Rng::seed_from_u64(spec.seed);
    uniform.set_stream(1);
    let sigma: Vec<f64> = (0..n).map(|_| spec.idio_vol * uniform.random_range(0.75..1.25)).collect();
    let loading: Vec<f64> = (0..n).map(|_| spec.loading_scale * uniform.random_range(0.5..1.5)).collect();

    let phi = spec.ar_coef;
    let innov = (1.0 - phi * phi).sqrt();
    let mut macros = DMatrix::zeros(t_len, k);
    let mut prev: DVector<f64> = DVector::from_fn(k, |_, _| normal());
    let mut returns = DMatrix::zeros(t_len, n);
    for t in 0..t_len {
        let crash = uniform.random_bool(spec.tail_prob);
        let c = normal().abs();
        for i in 0..n {
            let predictable = mu[i] + (0..k).map(|j| b[(i, j)] * prev[j]).sum::<f64>();
            let jump = if crash { spec.tail_strength * loading[i] * c } else { 0.0 };
            returns[(t, i)] = predictable + sigma[i] * normal() - jump;
        }
        for j in 0..k {
            macros[(t, j)] = phi * prev[j] + innov * normal();
        }
        prev = macros.row(t).transpose();
    }
    Ok((ReturnPanel::from_matrix(returns, "asset"), ReturnPanel::from_matrix(macros, "macro")))
}

/// In-sample exclusion sweep: one risk matrix estimated on the whole sample, then the
/// most central asset is removed `max_exclusions` times.
pub fn simulation_sweep(
    spec: &SimulationSpec,
    tau: f64,
    max_exclusions: usize,
    mode: Mode,
    long_only: bool,
) -> Result<Vec<SweepRow>> {
    check_tau(tau)?;
    let (panel, macros) = generate(spec)?;
    let t_len = panel.n_periods();
    let tails = riskmatrix::forecast_tails(&panel, &macros, tau, t_len, t_len - 1, mode)?;
    let rm = riskmatrix::build_gamma(&tails)?.validate_pd(mode)?;
    let mean = DVector::from_fn(panel.n_assets(), |i, _| panel.values.column(i).mean());
    portfolio::exclusion_sweep(&rm, &mean, max_exclusions, long_only)
}
