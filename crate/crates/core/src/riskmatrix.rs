//! VaR⁺/ΔCoVaR forecasts and the tail-risk matrices Γ and Γ̃.
//!
//! All stored quantities are positive-oriented: `var_plus[i]` is minus the forecast
//! τ-quantile of asset `i`, and `delta_covar[i][j]` is minus the shift in that quantile
//! when asset `j` sits at its own VaR.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_tau, Error, Result};
use crate::linalg::{self, Spectral};
use crate::panel::ReturnPanel;
use crate::quantreg::{fit_quantile, DesignMatrix};

/// How out-of-range forecasts and non-positive-definite matrices are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Reject: range errors for VaR⁺ outside (0, 1), definiteness errors for Γ̃.
    #[default]
    Strict,
    /// Repair: clamp VaR⁺ into [1e-4, 1 − 1e-4] and floor small eigenvalues of Γ̃.
    Permissive,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Mode::Strict),
            "permissive" => Ok(Mode::Permissive),
            other => Err(Error::Domain(format!("unknown mode {other:?} (expected strict or permissive)"))),
        }
    }
}

const VAR_CLAMP_LO: f64 = 1e-4;
const VAR_CLAMP_HI: f64 = 1.0 - 1e-4;

/// One window's tail forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct TailForecastSet {
    pub tau: f64,
    pub var_plus: DVector<f64>,
    /// Zero diagonal; entry `(i, j)` is the ΔCoVaR⁺ of asset `i` given distress of `j`.
    pub delta_covar: DMatrix<f64>,
    /// Number of VaR⁺ entries clamped into range (permissive mode only).
    pub clamped: usize,
}

impl TailForecastSet {
    /// Validates raw forecasts. In permissive mode out-of-range VaR⁺ values are clamped
    /// and counted.
    pub fn new(tau: f64, var_plus: DVector<f64>, delta_covar: DMatrix<f64>, mode: Mode) -> Result<Self> {
        check_tau(tau)?;
        let n = var_plus.len();
        if delta_covar.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "ΔCoVaR matrix is {}x{} for {n} assets",
                delta_covar.nrows(),
                delta_covar.ncols()
            )));
        }
        if var_plus.iter().chain(delta_covar.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("tail forecasts contain non-finite values".into()));
        }
        if let Some(i) = (0..n).find(|&i| delta_covar[(i, i)] != 0.0) {
            return Err(Error::Domain(format!("ΔCoVaR diagonal entry {i} is not zero")));
        }
        let mut var_plus = var_plus;
        let mut clamped = 0;
        for i in 0..n {
            let v = var_plus[i];
            if v > 0.0 && v < 1.0 {
                continue;
            }
            match mode {
                Mode::Strict => {
                    return Err(Error::Range(format!("VaR+ of asset {i} is {v}, outside (0, 1)")));
                }
                Mode::Permissive => {
                    var_plus[i] = v.clamp(VAR_CLAMP_LO, VAR_CLAMP_HI);
                    clamped += 1;
                }
            }
        }
        Ok(TailForecastSet { tau, var_plus, delta_covar, clamped })
    }

    pub fn n_assets(&self) -> usize {
        self.var_plus.len()
    }
}

/// Fits the VaR and CoVaR quantile regressions on one rolling window and returns the
/// one-step-ahead forecasts.
///
/// The window holds return rows `window_end + 1 − window ..= window_end`. Each return
/// `R_s` is paired with the predictors `M_{s−1}`, so a window starting at row 0 loses its
/// first observation. Forecasts condition on `M_{window_end}`.
///
/// The VaR model regresses `R_i` on `(1, M_{s−1})`; the CoVaR model for pair `(i, j)`
/// regresses `R_i` on `(1, M_{s−1}, R_j)` and evaluates at `R_j = VaR_j` forecast.
pub fn forecast_tails(
    panel: &ReturnPanel,
    macros: &ReturnPanel,
    tau: f64,
    window: usize,
    window_end: usize,
    mode: Mode,
) -> Result<TailForecastSet> {
    check_tau(tau)?;
    panel.check_aligned(macros)?;
    let n = panel.n_assets();
    let m = macros.n_assets();
    if window == 0 || window_end >= panel.n_periods() || window > window_end + 1 {
        return Err(Error::Dimension(format!(
            "window of {window} rows ending at row {window_end} does not fit a panel of {} rows",
            panel.n_periods()
        )));
    }
    let first = (window_end + 1 - window).max(1);
    let rows: Vec<usize> = (first..=window_end).collect();
    if rows.len() < m + 3 {
        return Err(Error::InsufficientData(format!(
            "window has {} usable observations; need at least {} for {m} predictors",
            rows.len(),
            m + 3
        )));
    }
    let r = &panel.values;
    let mv = &macros.values;

    let base = DMatrix::from_fn(rows.len(), m + 1, |t, k| if k == 0 { 1.0 } else { mv[(rows[t] - 1, k - 1)] });
    let var_design = DesignMatrix::new(base.clone())?;
    let mut x_next = vec![1.0];
    x_next.extend(mv.row(window_end).iter().copied());

    let var_fc: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let y: Vec<f64> = rows.iter().map(|&s| r[(s, i)]).collect();
            let model = fit_quantile(&var_design, &y, tau)?;
            model.predict(&x_next)
        })
        .collect();
    let var_fc = collect_indexed(var_fc, |i| (i, None))?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let covar_fc: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let design = DesignMatrix::new(DMatrix::from_fn(rows.len(), m + 2, |t, k| {
                if k == m + 1 {
                    r[(rows[t], j)]
                } else {
                    base[(t, k)]
                }
            }))?;
            let y: Vec<f64> = rows.iter().map(|&s| r[(s, i)]).collect();
            let model = fit_quantile(&design, &y, tau)?;
            let mut x = x_next.clone();
            x.push(var_fc[j]);
            model.predict(&x)
        })
        .collect();

    let mut delta_covar = DMatrix::zeros(n, n);
    for (&(i, j), res) in pairs.iter().zip(covar_fc) {
        let covar = res.map_err(|e| Error::Fit { i, j: Some(j), source: Box::new(e) })?;
        delta_covar[(i, j)] = -(covar - var_fc[i]);
    }
    let var_plus = DVector::from_iterator(n, var_fc.iter().map(|q| -q));
    TailForecastSet::new(tau, var_plus, delta_covar, mode)
}

fn collect_indexed(results: Vec<Result<f64>>, label: impl Fn(usize) -> (usize, Option<usize>)) -> Result<Vec<f64>> {
    results
        .into_iter()
        .enumerate()
        .map(|(k, res)| {
            res.map_err(|e| {
                let (i, j) = label(k);
                Error::Fit { i, j, source: Box::new(e) }
            })
        })
        .collect()
}

/// Γ, Γ̃ = (Γ + Γ')/2, and the spectral decomposition of Γ̃ once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrix {
    gamma: DMatrix<f64>,
    gamma_sym: DMatrix<f64>,
    spectral: Option<Spectral>,
    floored: bool,
}

/// Γ with `Γ_ii = VaR⁺_i` and `Γ_ij = sqrt(VaR⁺_i VaR⁺_j) · ΔCoVaR⁺_ij`.
pub fn build_gamma(f: &TailForecastSet) -> Result<RiskMatrix> {
    let n = f.n_assets();
    if let Some(i) = f.var_plus.iter().position(|&v| v < 0.0) {
        return Err(Error::Range(format!("VaR+ of asset {i} is negative")));
    }
    let gamma = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            f.var_plus[i]
        } else {
            (f.var_plus[i] * f.var_plus[j]).sqrt() * f.delta_covar[(i, j)]
        }
    });
    RiskMatrix::from_gamma(gamma)
}

/// Exact (Γ + Γ')/2.
pub fn symmetrize(gamma: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrize(gamma)
}

impl RiskMatrix {
    /// Wraps an asymmetric Γ and forms Γ̃. Spectral data is computed by
    /// [`RiskMatrix::validate_pd`].
    pub fn from_gamma(gamma: DMatrix<f64>) -> Result<Self> {
        if !gamma.is_square() {
            return Err(Error::Dimension(format!("risk matrix is {}x{}", gamma.nrows(), gamma.ncols())));
        }
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("risk matrix contains non-finite values".into()));
        }
        let gamma_sym = symmetrize(&gamma);
        Ok(RiskMatrix { gamma, gamma_sym, spectral: None, floored: false })
    }

    /// Validated risk matrix from an already symmetric Γ̃.
    pub fn from_symmetric(gamma_sym: DMatrix<f64>, mode: Mode) -> Result<Self> {
        RiskMatrix::from_gamma(gamma_sym)?.validate_pd(mode)
    }

    /// Eigen-decomposes Γ̃ and checks positive definiteness.
    ///
    /// Strict mode rejects `λ_min ≤ 1e-10`. Permissive mode raises every eigenvalue
    /// below `ε = 1e-8 · trace/N` to `ε` and reassembles Γ̃, setting [`Self::floored`].
    pub fn validate_pd(mut self, mode: Mode) -> Result<Self> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Dimension("empty risk matrix".into()));
        }
        let mut spectral = Spectral::of_symmetric(&self.gamma_sym);
        let lambda_min = spectral.values[n - 1];
        match mode {
            Mode::Strict => {
                if !(lambda_min > 1e-10) {
                    return Err(Error::Definiteness {
                        lambda_min,
                        eigenvector: spectral.vectors.column(n - 1).iter().copied().collect(),
                    });
                }
            }
            Mode::Permissive => {
                let mut eps = 1e-8 * self.gamma_sym.trace() / n as f64;
                if !(eps > 0.0) {
                    eps = 1e-12;
                }
                if lambda_min < eps {
                    for v in spectral.values.iter_mut() {
                        if *v < eps {
                            *v = eps;
                        }
                    }
                    self.gamma_sym = spectral.reconstruct();
                    self.floored = true;
                    log::warn!("risk matrix floored: lambda_min {lambda_min:e} raised to {eps:e}");
                }
            }
        }
        self.spectral = Some(spectral);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn gamma_sym(&self) -> &DMatrix<f64> {
        &self.gamma_sym
    }

    /// True when eigenvalue flooring modified Γ̃.
    pub fn floored(&self) -> bool {
        self.floored
    }

    pub fn spectral(&self) -> Result<&Spectral> {
        self.spectral
            .as_ref()
            .ok_or_else(|| Error::Internal("risk matrix has not been validated".into()))
    }

    pub fn eigenvalues(&self) -> Result<&DVector<f64>> {
        Ok(&self.spectral()?.values)
    }

    pub fn eigenvectors(&self) -> Result<&DMatrix<f64>> {
        Ok(&self.spectral()?.vectors)
    }

    /// `λ_max / λ_min` of Γ̃.
    pub fn condition_number(&self) -> Result<f64> {
        let v = self.eigenvalues()?;
        Ok(v[0] / v[v.len() - 1])
    }

    /// Principal submatrix on `keep`, revalidated.
    pub fn restrict(&self, keep: &[usize], mode: Mode) -> Result<RiskMatrix> {
        let gamma = linalg::select(&self.gamma, keep);
        let mut rm = RiskMatrix::from_gamma(gamma)?;
        if self.floored {
            rm.gamma_sym = linalg::select(&self.gamma_sym, keep);
        }
        rm.validate_pd(mode)
    }
}

/// Largest deviation of each eigenvalue of Γ̃ from its expansion in the eigenvector
/// entries: `λ_k = Σ_i u_ik² γ̃_ii + Σ_i Σ_{j≠i} u_ik u_jk γ̃_ij`.
pub fn eigen_decompose_identity_check(rm: &RiskMatrix) -> Result<f64> {
    let spectral = rm.spectral()?;
    let g = rm.gamma_sym();
    let n = rm.n();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let u = spectral.vectors.column(k);
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..n {
            diag += u[i] * u[i] * g[(i, i)];
            for j in 0..n {
                if j != i {
                    off += u[i] * u[j] * g[(i, j)];
                }
            }
        }
        worst = worst.max((spectral.values[k] - diag - off).abs());
    }
    Ok(worst)
}
