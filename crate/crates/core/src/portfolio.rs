//! Minimum-risk portfolios on the tail-risk matrix and the centrality-driven pruning
//! of assets.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, Spectral};
use crate::netgraph::{self, AdjacencyMatrix, CentralityVector, TransformedAdjacency};
use crate::panel::ReturnPanel;
use crate::riskmatrix::{Mode, RiskMatrix};

/// Fully invested portfolio over a subset of the asset universe.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: DVector<f64>,
    /// Universe index of each weight.
    pub assets: Vec<usize>,
    pub long_only: bool,
}

impl WeightVector {
    fn new(weights: DVector<f64>, long_only: bool) -> Self {
        let assets = (0..weights.len()).collect();
        WeightVector { weights, assets, long_only }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights spread over a universe of `n` assets, zero outside the subset.
    pub fn expand(&self, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (w, &a) in self.weights.iter().zip(&self.assets) {
            out[a] = *w;
        }
        out
    }

    fn relabel(mut self, assets: &[usize]) -> Self {
        self.assets = self.assets.iter().map(|&i| assets[i]).collect();
        self
    }
}

/// `w* = Γ̃⁻¹1 / (1'Γ̃⁻¹1)`, with the inverse applied through the cached spectral
/// decomposition.
pub fn gmvp(rm: &RiskMatrix) -> Result<WeightVector> {
    let spectral = rm.spectral()?;
    Ok(WeightVector::new(gmvp_spectral(spectral)?, false))
}

fn gmvp_spectral(spectral: &Spectral) -> Result<DVector<f64>> {
    let n = spectral.len();
    let x = spectral.solve(&DVector::from_element(n, 1.0))?;
    let s = x.sum();
    if !(s.abs() > 1e-300) || !s.is_finite() {
        return Err(Error::Singular("1'Γ̃⁻¹1 vanishes".into()));
    }
    Ok(x / s)
}

/// Minimizes `w'Γ̃w` over the simplex `{Σw = 1, w ≥ 0}` with a primal active-set method.
///
/// Starting from the single asset with the smallest diagonal entry, each iteration
/// solves the equality-constrained problem on the free assets, steps toward it until a
/// weight hits zero, and releases the bound with the most negative multiplier once no
/// step is possible.
pub fn gmvp_long_only(rm: &RiskMatrix) -> Result<WeightVector> {
    let g = rm.gamma_sym();
    let n = rm.n();
    if n == 0 {
        return Err(Error::Internal("empty support".into()));
    }
    let start = (0..n).min_by(|&a, &b| g[(a, a)].total_cmp(&g[(b, b)]).then(a.cmp(&b))).unwrap_or(0);
    let mut w = DVector::zeros(n);
    w[start] = 1.0;
    let mut free = vec![false; n];
    free[start] = true;

    for _ in 0..(50 * n + 100) {
        let support: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        if support.is_empty() {
            return Err(Error::Internal("empty support".into()));
        }
        let target = subset_gmvp(g, &support)?;
        let step: Vec<f64> = support.iter().enumerate().map(|(a, &i)| target[a] - w[i]).collect();
        let moved = step.iter().any(|d| d.abs() > 1e-15);
        if moved {
            let mut alpha = 1.0;
            let mut blocking = None;
            for (a, &i) in support.iter().enumerate() {
                if step[a] < 0.0 {
                    let ratio = -w[i] / step[a];
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            for (a, &i) in support.iter().enumerate() {
                w[i] += alpha * step[a];
            }
            if let Some(b) = blocking {
                w[b] = 0.0;
                free[b] = false;
                renormalize(&mut w);
                continue;
            }
        }
        // Equality-constrained optimum on the support: check the bound multipliers.
        let grad = g * &w * 2.0;
        let level = support.iter().map(|&i| grad[i]).sum::<f64>() / support.len() as f64;
        let release = (0..n)
            .filter(|&i| !free[i])
            .map(|i| (i, grad[i] - level))
            .filter(|&(_, mu)| mu < -1e-14 * level.abs().max(1e-300))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match release {
            Some((i, _)) => free[i] = true,
            None => {
                kkt_check(g, &w)?;
                return Ok(WeightVector::new(w, true));
            }
        }
    }
    Err(Error::Internal("long-only active set did not terminate".into()))
}

fn subset_gmvp(g: &DMatrix<f64>, support: &[usize]) -> Result<DVector<f64>> {
    let sub = linalg::select(g, support);
    let chol = sub
        .cholesky()
        .ok_or_else(|| Error::Singular("risk submatrix is not positive definite".into()))?;
    let x = chol.solve(&DVector::from_element(support.len(), 1.0));
    Ok(&x / x.sum())
}

fn renormalize(w: &mut DVector<f64>) {
    w.iter_mut().filter(|x| **x < 0.0).for_each(|x| *x = 0.0);
    let s = w.sum();
    *w /= s;
}

/// Zeroed assets must have gradient at least the common level of the supported ones.
fn kkt_check(g: &DMatrix<f64>, w: &DVector<f64>) -> Result<()> {
    let grad = g * w * 2.0;
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let level = support.iter().map(|&i| grad[i]).sum::<f64>() / support.len() as f64;
    let scale = grad.amax().max(1e-300);
    for i in 0..w.len() {
        if w[i] == 0.0 && grad[i] < level - 1e-8 * scale {
            return Err(Error::Internal(format!(
                "long-only solution violates KKT conditions at asset {i}"
            )));
        }
    }
    Ok(())
}

/// Minimum-risk weights written through the spectrum of `Ω̃ = I − Γ̃`:
///
/// ```text
/// w_i ∝ ṽ_i (Σ_j ṽ_j) / (1 − λ_(1)) + Σ_{k≥2} s_ik (Σ_j s_jk) / (1 − λ_k)
/// ```
///
/// normalized by `Σ_k (Σ_j s_jk)² / (1 − λ_k)`. Requires every `λ^Ω̃` in (0, 1).
pub fn gmvp_centrality_form(ta: &TransformedAdjacency) -> Result<WeightVector> {
    if !ta.assumption3() {
        return Err(Error::Assumption("eigenvalues of I − Γ̃ must all lie strictly inside (0, 1)".into()));
    }
    let lambdas: Vec<f64> = ta.eigenvalues().iter().map(|l| 1.0 - l).collect();
    Ok(WeightVector::new(spectral_weights(ta.eigenvectors(), &lambdas)?, false))
}

/// Minimum-risk weights when every VaR⁺ equals a common `γ`, written through the
/// spectrum of `Ω`: the eigenvalue entering each term becomes `γ + λ^Ω_k` and the
/// leading term carries the centrality `v`.
pub fn gmvp_common_gamma_form(rm: &RiskMatrix) -> Result<WeightVector> {
    let g = rm.gamma_sym();
    let gamma = g[(0, 0)];
    if (0..rm.n()).any(|i| (g[(i, i)] - gamma).abs() > 1e-12 * gamma.abs().max(1e-300)) {
        return Err(Error::Assumption("diagonal of Γ̃ is not constant".into()));
    }
    let adj = netgraph::adjacency(rm);
    let denoms: Vec<f64> = adj.eigenvalues().iter().map(|l| gamma + l).collect();
    Ok(WeightVector::new(spectral_weights(adj.eigenvectors(), &denoms)?, false))
}

/// `w_i = Σ_k s_ik c_k / d_k / Σ_k c_k² / d_k` with `c_k = Σ_j s_jk`.
fn spectral_weights(s: &DMatrix<f64>, denoms: &[f64]) -> Result<DVector<f64>> {
    let n = s.nrows();
    if denoms.iter().any(|d| d.abs() < 1e-300) {
        return Err(Error::Singular("zero eigenvalue in weight formula".into()));
    }
    let col_sums: Vec<f64> = (0..n).map(|k| s.column(k).sum()).collect();
    let denom: f64 = (0..n).map(|k| col_sums[k] * col_sums[k] / denoms[k]).sum();
    if denom.abs() < 1e-300 {
        return Err(Error::Singular("weight normalization vanishes".into()));
    }
    Ok(DVector::from_fn(n, |i, _| {
        (0..n).map(|k| s[(i, k)] * col_sums[k] / denoms[k]).sum::<f64>() / denom
    }))
}

/// One sufficient condition for weights to increase with centrality.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub holds: bool,
    /// Smallest slack over all index pairs; positive when the condition holds.
    pub worst_margin: f64,
    /// `(i, k)` attaining the smallest slack (for the scalar condition, `None`).
    pub witness: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// False for a single asset, where the conditions carry no information.
    pub applicable: bool,
    /// `Σ_j s_jk > 2 s_ik` for all `i, k`.
    pub column_sum: ConditionCheck,
    /// `Σ_j ṽ_j > 1`.
    pub centrality_mass: ConditionCheck,
    /// `ṽ_i Σ_j s_jk > s_ik / (1 − λ_(1))` for all `i, k`.
    pub centrality_dominance: ConditionCheck,
}

/// Evaluates the eigenvector conditions under which optimal weights increase with
/// centrality. The leading eigenvector is taken with its nonnegative orientation.
pub fn theorem2_conditions(ta: &TransformedAdjacency) -> ConditionReport {
    let n = ta.n();
    let mut s = ta.eigenvectors().clone();
    let v = &ta.centrality().values;
    if n > 0 {
        s.set_column(0, v);
    }
    let lambda1 = ta.eigenvalues().get(0).copied().unwrap_or(0.0);
    let col_sums: Vec<f64> = (0..n).map(|k| s.column(k).sum()).collect();

    let scan = |f: &dyn Fn(usize, usize) -> f64| {
        let mut worst = f64::INFINITY;
        let mut witness = None;
        for i in 0..n {
            for k in 0..n {
                let m = f(i, k);
                if m < worst {
                    worst = m;
                    witness = Some((i, k));
                }
            }
        }
        ConditionCheck { holds: worst > 0.0, worst_margin: worst, witness }
    };
    let column_sum = scan(&|i, k| col_sums[k] - 2.0 * s[(i, k)]);
    let centrality_dominance = scan(&|i, k| v[i] * col_sums[k] - s[(i, k)] / (1.0 - lambda1));
    let mass = v.sum() - 1.0;
    let centrality_mass = ConditionCheck { holds: mass > 0.0, worst_margin: mass, witness: None };
    ConditionReport { applicable: n > 1, column_sum, centrality_mass, centrality_dominance }
}

/// `Q(Γ̃, w) = w'Ωw + Σ w_i² γ_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskDecomposition {
    pub total: f64,
    pub network_part: f64,
    pub idiosyncratic_part: f64,
}

pub fn portfolio_risk(rm: &RiskMatrix, w: &DVector<f64>) -> Result<RiskDecomposition> {
    let g = rm.gamma_sym();
    if w.len() != rm.n() {
        return Err(Error::Dimension(format!("{} weights for {} assets", w.len(), rm.n())));
    }
    let idiosyncratic_part: f64 = (0..w.len()).map(|i| w[i] * w[i] * g[(i, i)]).sum();
    let mut omega = g.clone();
    omega.fill_diagonal(0.0);
    let network_part = linalg::quad_form(&omega, w);
    Ok(RiskDecomposition { total: linalg::quad_form(g, w), network_part, idiosyncratic_part })
}

/// The Δ criterion for deleting asset `k` and the companion terms that reassemble the
/// full change in network risk.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTerms {
    pub k: usize,
    /// Eigenvalue-gap term plus eigenvector-change term over the paired spectrum.
    pub delta: f64,
    /// Δ with every full eigenvalue replaced by its paired reduced eigenvalue.
    pub delta_substituted: f64,
    /// Factored product form, equal to `delta_substituted`.
    pub delta_factored: f64,
    /// `Σ_i λ_i ((w_k z_ki)² + 2 w_k z_ki Σ_{j≠k} w_j z_ji)` over the paired spectrum.
    pub own_term: f64,
    /// `λ_N (Σ_j w_j z_jN)²` for the smallest full eigenpair, which has no partner.
    pub unpaired_term: f64,
    /// `w'Ωw`.
    pub network_full: f64,
    /// `w∖k'Ω∖k w∖k`.
    pub network_reduced: f64,
}

/// Evaluates Δ for removing `k` from the network `omega` given full and reduced weights.
///
/// The `N − 1` reduced eigenpairs are paired with the `N − 1` largest full eigenpairs
/// in descending order. Reduced eigenvectors are embedded in the full index space with a
/// zero at position `k`.
pub fn delta_terms(omega: &DMatrix<f64>, k: usize, w_full: &DVector<f64>, w_red: &DVector<f64>) -> Result<DeltaTerms> {
    let n = omega.nrows();
    if n < 3 {
        return Err(Error::TooSmall(format!("Δ needs at least 3 assets, got {n}")));
    }
    if k >= n {
        return Err(Error::Dimension(format!("asset {k} out of range for {n} assets")));
    }
    if w_full.len() != n || w_red.len() != n - 1 {
        return Err(Error::Dimension("weight vectors do not match the network size".into()));
    }
    let full = Spectral::of_symmetric(omega);
    let reduced = Spectral::of_symmetric(&linalg::remove_index(omega, k));
    let z = &full.vectors;
    let y = embed(&reduced.vectors, k);
    let w_red_full = embed_vec(w_red, k);

    let mut delta = 0.0;
    let mut substituted = 0.0;
    let mut factored = 0.0;
    let mut own = 0.0;
    for i in 0..n - 1 {
        let (lam, mu) = (full.values[i], reduced.values[i]);
        let zi = z.column(i);
        let yi = y.column(i);
        let a: f64 = (0..n).filter(|&j| j != k).map(|j| w_full[j] * zi[j]).sum();
        let b: f64 = (0..n).map(|j| w_red_full[j] * yi[j]).sum();
        delta += (lam - mu) * a * a + mu * (a * a - b * b);
        substituted += mu * (a * a - b * b);

        let sum_plus: f64 = (0..n).filter(|&j| j != k).map(|j| (w_full[j] + w_red_full[j]) * zi[j]).sum();
        let sum_minus: f64 = (0..n).filter(|&j| j != k).map(|j| (w_full[j] - w_red_full[j]) * zi[j]).sum();
        let vec_plus: f64 = (0..n).filter(|&j| j != k).map(|j| w_red_full[j] * (zi[j] + yi[j])).sum();
        let vec_minus: f64 = (0..n).filter(|&j| j != k).map(|j| w_red_full[j] * (zi[j] - yi[j])).sum();
        factored += mu * sum_plus * sum_minus + mu * vec_plus * vec_minus;

        let wk = w_full[k] * zi[k];
        own += lam * (wk * wk + 2.0 * wk * a);
    }
    let last = z.column(n - 1);
    let c: f64 = (0..n).map(|j| w_full[j] * last[j]).sum();
    let unpaired_term = full.values[n - 1] * c * c;

    Ok(DeltaTerms {
        k,
        delta,
        delta_substituted: substituted,
        delta_factored: factored,
        own_term: own,
        unpaired_term,
        network_full: linalg::quad_form(omega, w_full),
        network_reduced: linalg::quad_form(&linalg::remove_index(omega, k), w_red),
    })
}

fn embed(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.clone().insert_row(k, 0.0)
}

fn embed_vec(v: &DVector<f64>, k: usize) -> DVector<f64> {
    v.clone().insert_row(k, 0.0)
}

/// Δ for removing asset `k`, with minimum-risk weights on the full and reduced matrices.
pub fn delta_function(rm: &RiskMatrix, k: usize, long_only: bool) -> Result<DeltaTerms> {
    let n = rm.n();
    if n < 3 {
        return Err(Error::TooSmall(format!("Δ needs at least 3 assets, got {n}")));
    }
    if k >= n {
        return Err(Error::Dimension(format!("asset {k} out of range for {n} assets")));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let reduced = rm.restrict(&keep, restrict_mode(rm))?;
    let w_full = solve_weights(rm, long_only)?;
    let w_red = solve_weights(&reduced, long_only)?;
    let mut omega = rm.gamma_sym().clone();
    omega.fill_diagonal(0.0);
    delta_terms(&omega, k, &w_full.weights, &w_red.weights)
}

fn restrict_mode(rm: &RiskMatrix) -> Mode {
    if rm.floored() {
        Mode::Permissive
    } else {
        Mode::Strict
    }
}

fn solve_weights(rm: &RiskMatrix, long_only: bool) -> Result<WeightVector> {
    if long_only {
        gmvp_long_only(rm)
    } else {
        gmvp(rm)
    }
}

/// Both sides of the eigenvalue-gap identity for eigen index `s` after deleting node `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenGap {
    /// Eigenvector-difference expansion.
    pub expansion: f64,
    /// `λ_s(Ω) − λ_s(Ω∖k)`.
    pub direct: f64,
}

/// Expands `λ_s − λ_{s∖k}` as
/// `Σ_{i,j≠k} (z_is z_js − y_is y_js) Ω_ij + Σ_j z_ks z_js Ω_kj + Σ_i z_is z_ks Ω_ki`,
/// where `y` is the reduced eigenvector padded with zero at `k`.
pub fn eigen_diff_decomposition(full: &AdjacencyMatrix, reduced: &AdjacencyMatrix, k: usize, s: usize) -> Result<EigenGap> {
    let n = full.n();
    if k >= n || reduced.n() + 1 != n || s + 1 >= n {
        return Err(Error::Dimension(format!(
            "indices k = {k}, s = {s} invalid for networks of {n} and {} nodes",
            reduced.n()
        )));
    }
    let omega = full.omega();
    let z = full.eigenvectors();
    let y = embed(reduced.eigenvectors(), k);
    let mut total = 0.0;
    for i in (0..n).filter(|&i| i != k) {
        for j in (0..n).filter(|&j| j != k) {
            total += (z[(i, s)] * z[(j, s)] - y[(i, s)] * y[(j, s)]) * omega[(i, j)];
        }
    }
    for j in 0..n {
        total += z[(k, s)] * z[(j, s)] * omega[(k, j)];
    }
    for i in 0..n {
        total += z[(i, s)] * z[(k, s)] * omega[(k, i)];
    }
    Ok(EigenGap { expansion: total, direct: full.eigenvalues()[s] - reduced.eigenvalues()[s] })
}

/// `v_i = −2 w_i / Σ_j w_j v_j`, the centrality profile that minimizes `w'Ωw`.
pub fn min_risk_centrality(w: &DVector<f64>, v: &CentralityVector) -> Result<DVector<f64>> {
    if w.len() != v.values.len() {
        return Err(Error::Dimension(format!("{} weights for {} centralities", w.len(), v.values.len())));
    }
    let denom = w.dot(&v.values);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Degenerate("Σ w_j v_j is zero".into()));
    }
    Ok(w.map(|wi| -2.0 * wi / denom))
}

/// `∂(w'Ωw)/∂v_i = λ_(1) v_i (Σ w_j v_j)² + 2 λ_(1) w_i (Σ w_j v_j)`.
pub fn centrality_risk_derivative(w: &DVector<f64>, v: &DVector<f64>, lambda1: f64) -> Result<DVector<f64>> {
    if w.len() != v.len() {
        return Err(Error::Dimension(format!("{} weights for {} centralities", w.len(), v.len())));
    }
    let s = w.dot(v);
    Ok(DVector::from_fn(w.len(), |i, _| lambda1 * v[i] * s * s + 2.0 * lambda1 * w[i] * s))
}

/// Options for [`prune`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    /// Never shrink below this many assets (at least 2).
    pub min_assets: usize,
    /// Removal budget; `None` allows up to `N − min_assets`.
    pub max_removals: Option<usize>,
    pub long_only: bool,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { min_assets: 2, max_removals: None, long_only: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneStep {
    /// Universe index of the most central asset at this step.
    pub candidate: usize,
    /// `Some(candidate)` when it was removed.
    pub removed: Option<usize>,
    pub centrality_max: f64,
    pub delta: f64,
    pub weights_before: WeightVector,
    /// Minimum-risk weights without the candidate.
    pub weights_after: WeightVector,
    pub risk_before: f64,
    pub risk_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Δ ≥ 0 for the most central asset.
    DeltaNonNegative,
    MinAssets,
    MaxRemovals,
    /// Fewer than three assets remain, so Δ is undefined.
    TooFewAssets,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneTrace {
    pub steps: Vec<PruneStep>,
    pub final_assets: Vec<usize>,
    pub final_weights: WeightVector,
    pub stop: StopReason,
}

impl PruneTrace {
    pub fn removals(&self) -> usize {
        self.steps.iter().filter(|s| s.removed.is_some()).count()
    }
}

/// Sequentially removes the most central asset while Δ is negative.
///
/// Each step solves the minimum-risk portfolio, computes centrality on `Ω`, picks the
/// most central asset (smallest index on ties), solves the reduced portfolio and
/// evaluates Δ. Δ = 0 counts as non-negative and stops the procedure.
pub fn prune(rm: &RiskMatrix, cfg: PruneConfig) -> Result<PruneTrace> {
    let n = rm.n();
    if cfg.min_assets < 2 || cfg.min_assets > n {
        return Err(Error::Domain(format!(
            "min_assets = {} must lie in [2, {n}]",
            cfg.min_assets
        )));
    }
    let budget = cfg.max_removals.unwrap_or(n - cfg.min_assets);
    let mode = restrict_mode(rm);
    let mut current: Vec<usize> = (0..n).collect();
    let mut sub = rm.clone();
    let mut steps = Vec::new();
    let mut removals = 0;

    let stop = loop {
        if current.len() < 3 {
            break StopReason::TooFewAssets;
        }
        let step_no = steps.len() + 1;
        let ctx = |e: Error| e.context(format!("prune step {step_no}"));
        let w_full = solve_weights(&sub, cfg.long_only).map_err(ctx)?;
        let adj = netgraph::adjacency(&sub);
        let centrality = netgraph::eigen_centrality(&adj).map_err(ctx)?;
        let k = centrality.argmax();
        let keep: Vec<usize> = (0..current.len()).filter(|&i| i != k).collect();
        let reduced = sub.restrict(&keep, mode).map_err(ctx)?;
        let w_red = solve_weights(&reduced, cfg.long_only).map_err(ctx)?;
        let terms = delta_terms(adj.omega(), k, &w_full.weights, &w_red.weights).map_err(ctx)?;
        let risk_before = portfolio_risk(&sub, &w_full.weights)?.total;
        let risk_after = portfolio_risk(&reduced, &w_red.weights)?.total;

        let reduced_ids: Vec<usize> = keep.iter().map(|&i| current[i]).collect();
        let mut step = PruneStep {
            candidate: current[k],
            removed: None,
            centrality_max: centrality.values[k],
            delta: terms.delta,
            weights_before: w_full.relabel(&current),
            weights_after: w_red.relabel(&reduced_ids),
            risk_before,
            risk_after,
        };
        let reason = if !(terms.delta < 0.0) {
            Some(StopReason::DeltaNonNegative)
        } else if removals >= budget {
            Some(StopReason::MaxRemovals)
        } else if current.len() - 1 < cfg.min_assets {
            Some(StopReason::MinAssets)
        } else {
            None
        };
        if let Some(reason) = reason {
            steps.push(step);
            break reason;
        }
        step.removed = Some(current[k]);
        steps.push(step);
        removals += 1;
        current = reduced_ids;
        sub = reduced;
    };

    let final_weights = solve_weights(&sub, cfg.long_only)?.relabel(&current);
    Ok(PruneTrace { steps, final_assets: current, final_weights, stop })
}

/// One row of an exclusion sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub exclusions: usize,
    /// Mean portfolio return `w'μ` of the reduced minimum-risk portfolio.
    pub r_p: f64,
    /// Minimum risk `Q(Γ̃∖S, w∖S)` after the exclusions.
    pub q: f64,
    /// Δ evaluated when the last of these assets was removed.
    pub delta: f64,
    /// Universe index of the asset removed at this row.
    pub removed: usize,
}

/// Removes the most central asset `max_exclusions` times regardless of the sign of Δ,
/// recording return, risk and Δ after each removal.
pub fn exclusion_sweep(
    rm: &RiskMatrix,
    mean_returns: &DVector<f64>,
    max_exclusions: usize,
    long_only: bool,
) -> Result<Vec<SweepRow>> {
    let n = rm.n();
    if mean_returns.len() != n {
        return Err(Error::Dimension(format!("{} mean returns for {n} assets", mean_returns.len())));
    }
    if max_exclusions + 2 > n {
        return Err(Error::TooSmall(format!(
            "{max_exclusions} exclusions leave fewer than 2 of {n} assets"
        )));
    }
    let mode = restrict_mode(rm);
    let mut current: Vec<usize> = (0..n).collect();
    let mut sub = rm.clone();
    let mut rows = Vec::with_capacity(max_exclusions);
    for e in 1..=max_exclusions {
        let adj = netgraph::adjacency(&sub);
        let k = netgraph::eigen_centrality(&adj)?.argmax();
        let keep: Vec<usize> = (0..current.len()).filter(|&i| i != k).collect();
        let reduced = sub.restrict(&keep, mode).map_err(|err| err.context(format!("exclusion {e}")))?;
        let w_red = solve_weights(&reduced, long_only)?;
        let delta = if current.len() >= 3 {
            let w_full = solve_weights(&sub, long_only)?;
            delta_terms(adj.omega(), k, &w_full.weights, &w_red.weights)?.delta
        } else {
            f64::NAN
        };
        let ids: Vec<usize> = keep.iter().map(|&i| current[i]).collect();
        let r_p = ids.iter().zip(w_red.weights.iter()).map(|(&a, w)| w * mean_returns[a]).sum();
        let q = portfolio_risk(&reduced, &w_red.weights)?.total;
        rows.push(SweepRow { exclusions: e, r_p, q, delta, removed: current[k] });
        current = ids;
        sub = reduced;
    }
    Ok(rows)
}

/// Fixed-width table with columns Exclusions, r^p, Q, Δ.
pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>10} {:>14} {:>14} {:>14}", "Exclusions", "r^p", "Q", "Delta");
    for r in rows {
        let _ = writeln!(out, "{:>10} {:>14.6e} {:>14.6e} {:>14.6e}", r.exclusions, r.r_p, r.q, r.delta);
    }
    out
}

/// Sample moments and minimum-variance weights of the classical covariance problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkowitzBaseline {
    pub weights: WeightVector,
    pub mean: DVector<f64>,
    /// `(1/T) Σ (R_t − R̄)(R_t − R̄)'`.
    pub covariance: DMatrix<f64>,
}

pub fn markowitz_baseline(panel: &ReturnPanel, window: Range<usize>) -> Result<MarkowitzBaseline> {
    let n = panel.n_assets();
    if window.end > panel.n_periods() || window.start >= window.end {
        return Err(Error::Dimension(format!(
            "window {window:?} outside a panel of {} rows",
            panel.n_periods()
        )));
    }
    let t = window.len();
    if t <= n {
        return Err(Error::InsufficientData(format!("window of {t} rows for {n} assets")));
    }
    let rows = panel.values.rows(window.start, t);
    let mean = DVector::from_fn(n, |i, _| rows.column(i).mean());
    let centered = DMatrix::from_fn(t, n, |r, c| rows[(r, c)] - mean[c]);
    let covariance = linalg::symmetrize(&(centered.transpose() * &centered / t as f64));
    let spectral = Spectral::of_symmetric(&covariance);
    let (hi, lo) = (spectral.values[0], spectral.values[n - 1]);
    if !(lo > 1e-12 * hi.abs().max(1e-300)) {
        return Err(Error::Singular(format!(
            "sample covariance is singular (lambda_min = {lo:e}); extend the window or drop duplicated assets"
        )));
    }
    let weights = WeightVector::new(gmvp_spectral(&spectral)?, false);
    Ok(MarkowitzBaseline { weights, mean, covariance })
}
