//! Linear quantile regression.
//!
//! The estimator minimizes the check loss `Σ_t ρ_τ(y_t − θ'x_t)` exactly. The problem is
//! the linear program
//!
//! ```text
//! min τ·1'u + (1−τ)·1'v   s.t.   Xθ + u − v = y,  u, v ≥ 0,  θ free
//! ```
//!
//! whose vertices are the coefficient vectors interpolating `p` observations (a basis).
//! [`fit_quantile`] runs a primal simplex over those vertices: at each basis it prices
//! the `2p` edges obtained by releasing one basic observation in either direction, and
//! moves along the steepest descending edge with an exact line search over the
//! piecewise-linear loss. Every pivot strictly lowers the objective, so the iteration
//! cannot cycle. Regressors and response are standardized internally and the
//! coefficients are mapped back, which leaves the optimum unchanged.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_tau, Error, Result};

/// Check (pinball) loss `ρ_τ(u) = u·(τ − 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(rho(u, tau))
}

#[inline]
fn rho(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

/// Regressor matrix with a leading intercept column of ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, p) = values.shape();
        if p == 0 {
            return Err(Error::Dimension("design matrix has no columns".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("design matrix contains missing or non-finite values".into()));
        }
        if (0..n).any(|i| values[(i, 0)] != 1.0) {
            return Err(Error::Domain("first design column must be the intercept (all ones)".into()));
        }
        if n <= p {
            return Err(Error::InsufficientData(format!(
                "{n} observations for {p} coefficients; need more rows than columns"
            )));
        }
        Ok(DesignMatrix { values })
    }

    /// Builds `[1, regressors]`.
    pub fn with_intercept(regressors: &DMatrix<f64>) -> Result<Self> {
        let n = regressors.nrows();
        let values = regressors.clone().insert_column(0, 1.0);
        debug_assert_eq!(values.nrows(), n);
        DesignMatrix::new(values)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Fitted linear conditional-quantile model.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileModel {
    pub tau: f64,
    /// Intercept first, then slopes in design-column order.
    pub coefficients: DVector<f64>,
    pub n_obs: usize,
    /// Check-loss sum at the returned coefficients.
    pub objective: f64,
    /// Simplex pivots taken from the starting basis.
    pub iterations: usize,
}

impl QuantileModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::Dimension(format!(
                "predictor has {} entries, model has {} coefficients",
                x.len(),
                self.coefficients.len()
            )));
        }
        Ok(self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum())
    }
}

/// Largest number of alternative optimal vertices inspected when breaking ties.
const MAX_TIE_VERTICES: usize = 64;

/// Fits the `tau`-quantile regression of `y` on `x`.
///
/// When the optimum is not unique the minimum-Euclidean-norm coefficient vector among
/// the optimal vertices reachable along flat edges is returned.
pub fn fit_quantile(x: &DesignMatrix, y: &[f64], tau: f64) -> Result<QuantileModel> {
    check_tau(tau)?;
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::Dimension(format!("{} responses for {n} design rows", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("response contains non-finite values".into()));
    }

    let std = Standardized::new(x, y)?;
    let mut solver = VertexSimplex::new(&std.z, &std.y, tau)?;
    solver.run()?;
    let best = solver.min_norm_optimum(|theta| std.back_transform(theta).norm());

    let coefficients = std.back_transform(&best);
    let objective = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|k| x.values[(i, k)] * coefficients[k]).sum();
            rho(y[i] - fit, tau)
        })
        .sum();
    Ok(QuantileModel {
        tau,
        coefficients,
        n_obs: n,
        objective,
        iterations: solver.iterations,
    })
}

/// Column-standardized design and scaled response.
struct Standardized {
    z: DMatrix<f64>,
    y: DVector<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    y_scale: f64,
}

impl Standardized {
    fn new(x: &DesignMatrix, y: &[f64]) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        let mut z = x.values.clone();
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        for k in 1..p {
            let col = x.values.column(k);
            let mean = col.mean();
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let mag = col.amax().max(1.0);
            if !(sd > 1e-12 * mag) {
                return Err(Error::SingularDesign(format!(
                    "column {k} is constant and collinear with the intercept"
                )));
            }
            means[k] = mean;
            scales[k] = sd;
            for i in 0..n {
                z[(i, k)] = (x.values[(i, k)] - mean) / sd;
            }
        }

        let sv = z.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-10 * smax) {
            return Err(Error::SingularDesign(format!(
                "design matrix is rank deficient (condition number {:.3e})",
                smax / smin
            )));
        }

        let ymean = y.iter().sum::<f64>() / n as f64;
        let ysd = (y.iter().map(|v| (v - ymean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let y_scale = if ysd > 0.0 { ysd } else { 1.0 };
        let y = DVector::from_iterator(n, y.iter().map(|v| v / y_scale));
        Ok(Standardized { z, y, means, scales, y_scale })
    }

    fn back_transform(&self, theta: &DVector<f64>) -> DVector<f64> {
        let p = theta.len();
        let mut out = DVector::zeros(p);
        let mut intercept = theta[0];
        for k in 1..p {
            out[k] = theta[k] / self.scales[k] * self.y_scale;
            intercept -= theta[k] * self.means[k] / self.scales[k];
        }
        out[0] = intercept * self.y_scale;
        out
    }
}

/// Primal simplex over interpolating bases of the quantile-regression LP.
struct VertexSimplex<'a> {
    z: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    tau: f64,
    basis: Vec<usize>,
    iterations: usize,
    zero_tol: f64,
}

/// Edge leaving the current vertex: basic slot `slot` released in direction `sign`.
#[derive(Debug, Clone, Copy)]
struct Edge {
    slot: usize,
    sign: f64,
    slope: f64,
    scale: f64,
}

/// Basis-dependent quantities at a vertex.
struct Vertex {
    theta: DVector<f64>,
    residuals: DVector<f64>,
    /// `Z·B⁻¹`: column `j` is the change in fitted values per unit move along edge `j`.
    directions: DMatrix<f64>,
}

impl<'a> VertexSimplex<'a> {
    fn new(z: &'a DMatrix<f64>, y: &'a DVector<f64>, tau: f64) -> Result<Self> {
        let basis = initial_basis(z, y)?;
        let zero_tol = 1e-11 * y.amax().max(1.0);
        Ok(VertexSimplex { z, y, tau, basis, iterations: 0, zero_tol })
    }

    fn vertex(&self, basis: &[usize]) -> Result<Vertex> {
        let p = self.z.ncols();
        let b = DMatrix::from_fn(p, p, |r, c| self.z[(basis[r], c)]);
        let binv = b
            .try_inverse()
            .ok_or_else(|| Error::Internal("simplex basis became singular".into()))?;
        let yb = DVector::from_iterator(p, basis.iter().map(|&i| self.y[i]));
        let theta = &binv * yb;
        let mut residuals = self.y - self.z * &theta;
        for &i in basis {
            residuals[i] = 0.0;
        }
        let directions = self.z * binv;
        Ok(Vertex { theta, residuals, directions })
    }

    /// One-sided derivative of the loss along every edge.
    fn price(&self, v: &Vertex) -> Vec<Edge> {
        let (n, p) = v.directions.shape();
        let tau = self.tau;
        let mut edges = Vec::with_capacity(2 * p);
        for slot in 0..p {
            for sign in [1.0, -1.0] {
                let mut slope = 0.0;
                let mut scale = 0.0;
                for i in 0..n {
                    // Residual of row i moves at rate -sign * c.
                    let delta = -sign * v.directions[(i, slot)];
                    scale += delta.abs();
                    let r = v.residuals[i];
                    slope += if r > self.zero_tol {
                        tau * delta
                    } else if r < -self.zero_tol {
                        (tau - 1.0) * delta
                    } else if delta > 0.0 {
                        tau * delta
                    } else {
                        (tau - 1.0) * delta
                    };
                }
                edges.push(Edge { slot, sign, slope, scale });
            }
        }
        edges
    }

    /// Exact line search along `edge`; returns the row entering the basis.
    ///
    /// With `flat` set the walk stops at the first breakpoint, which is the far end of a
    /// zero-slope edge.
    fn ratio_test(&self, v: &Vertex, edge: Edge, flat: bool) -> Option<usize> {
        let n = v.residuals.len();
        let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
        for i in 0..n {
            if self.basis.contains(&i) {
                continue;
            }
            let c = edge.sign * v.directions[(i, edge.slot)];
            let r = v.residuals[i];
            if c.abs() < 1e-14 || r.abs() <= self.zero_tol {
                continue;
            }
            let t = r / c;
            if t > 0.0 {
                breaks.push((t, c.abs(), i));
            }
        }
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        if flat {
            return breaks.first().map(|b| b.2);
        }
        let mut slope = edge.slope;
        for &(_, weight, i) in &breaks {
            slope += weight;
            if slope >= 0.0 {
                return Some(i);
            }
        }
        None
    }

    fn objective(&self, v: &Vertex) -> f64 {
        v.residuals.iter().map(|&r| rho(r, self.tau)).sum()
    }

    fn run(&mut self) -> Result<()> {
        let max_iter = 50 * self.z.nrows() + 1000;
        loop {
            let v = self.vertex(&self.basis)?;
            let edges = self.price(&v);
            let best = edges
                .iter()
                .copied()
                .filter(|e| e.slope < -1e-11 * e.scale.max(1.0))
                .min_by(|a, b| (a.slope / a.scale).total_cmp(&(b.slope / b.scale)));
            let Some(edge) = best else {
                return Ok(());
            };
            let entering = self.ratio_test(&v, edge, false).ok_or_else(|| {
                Error::Internal("quantile regression objective is unbounded along an edge".into())
            })?;
            self.basis[edge.slot] = entering;
            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(Error::Internal(format!(
                    "quantile simplex did not converge in {max_iter} pivots"
                )));
            }
        }
    }

    /// Walks flat edges from the optimal basis and keeps the smallest-norm vertex.
    fn min_norm_optimum(&self, norm: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
        let start = match self.vertex(&self.basis) {
            Ok(v) => v,
            Err(_) => unreachable!("optimal basis was factorized during the run"),
        };
        let opt = self.objective(&start);
        let mut best_theta = start.theta.clone();
        let mut best_norm = norm(&start.theta);

        let key = |b: &[usize]| {
            let mut k = b.to_vec();
            k.sort_unstable();
            k
        };
        let mut seen = vec![key(&self.basis)];
        let mut queue = vec![self.basis.clone()];
        while let Some(basis) = queue.pop() {
            if seen.len() >= MAX_TIE_VERTICES {
                break;
            }
            let probe = VertexSimplex { basis: basis.clone(), ..*self };
            let Ok(v) = probe.vertex(&basis) else { continue };
            for edge in probe.price(&v) {
                if edge.slope.abs() > 1e-11 * edge.scale.max(1.0) {
                    continue;
                }
                let Some(entering) = probe.ratio_test(&v, edge, true) else { continue };
                let mut next = basis.clone();
                next[edge.slot] = entering;
                let k = key(&next);
                if seen.contains(&k) {
                    continue;
                }
                seen.push(k);
                let Ok(nv) = probe.vertex(&next) else { continue };
                if probe.objective(&nv) > opt + 1e-12 * opt.abs().max(1.0) {
                    continue;
                }
                let nn = norm(&nv.theta);
                if nn < best_norm - 1e-12 * best_norm.max(1.0) {
                    best_norm = nn;
                    best_theta = nv.theta.clone();
                }
                queue.push(next);
            }
        }
        best_theta
    }
}

impl Clone for VertexSimplex<'_> {
    fn clone(&self) -> Self {
        VertexSimplex { basis: self.basis.clone(), ..*self }
    }
}

/// `p` linearly independent rows with small least-squares residuals.
fn initial_basis(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<usize>> {
    let (n, p) = z.shape();
    let ls = z
        .clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|e| Error::Internal(e.to_string()))?;
    let resid = y - z * ls;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()).then(a.cmp(&b)));

    // Greedy Gram-Schmidt over rows.
    let mut chosen = Vec::with_capacity(p);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    for &i in &order {
        let row = z.row(i).transpose();
        let mut q = row.clone();
        for u in &ortho {
            let proj = u.dot(&q);
            q -= u * proj;
        }
        let nq = q.norm();
        if nq > 1e-8 * row.norm().max(1e-300) {
            ortho.push(q / nq);
            chosen.push(i);
            if chosen.len() == p {
                return Ok(chosen);
            }
        }
    }
    Err(Error::SingularDesign("could not find a nonsingular starting basis".into()))
}
