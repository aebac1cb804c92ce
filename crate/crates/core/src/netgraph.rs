//! Tail-dependence network: adjacency matrices and eigenvector centrality.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, Spectral};
use crate::riskmatrix::RiskMatrix;

/// Hollow symmetric matrix `Ω = Γ̃ − diag(Γ̃)` with its spectral decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    omega: DMatrix<f64>,
    spectral: Spectral,
}

/// Adjacency matrix of the network implied by `rm`.
pub fn adjacency(rm: &RiskMatrix) -> AdjacencyMatrix {
    let mut omega = rm.gamma_sym().clone();
    omega.fill_diagonal(0.0);
    AdjacencyMatrix::from_hollow(omega)
}

impl AdjacencyMatrix {
    /// Validates symmetry and a zero diagonal.
    pub fn from_omega(omega: DMatrix<f64>) -> Result<Self> {
        if !omega.is_square() {
            return Err(Error::Dimension(format!("adjacency matrix is {}x{}", omega.nrows(), omega.ncols())));
        }
        if !linalg::is_symmetric(&omega) {
            return Err(Error::Domain("adjacency matrix must be symmetric".into()));
        }
        if omega.diagonal().iter().any(|&d| d != 0.0) {
            return Err(Error::Domain("adjacency matrix must have a zero diagonal".into()));
        }
        Ok(AdjacencyMatrix::from_hollow(omega))
    }

    fn from_hollow(omega: DMatrix<f64>) -> Self {
        let spectral = Spectral::of_symmetric(&omega);
        AdjacencyMatrix { omega, spectral }
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Eigenvalues `λ^Ω`, descending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.spectral.values
    }

    /// Eigenvectors `Z`, one per column.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.spectral.vectors
    }

    /// Adjacency matrix of the network with node `k` deleted.
    pub fn without(&self, k: usize) -> Result<AdjacencyMatrix> {
        if k >= self.n() {
            return Err(Error::Dimension(format!("node {k} out of range for {} nodes", self.n())));
        }
        Ok(AdjacencyMatrix::from_hollow(linalg::remove_index(&self.omega, k)))
    }

    /// Largest deviation of `λ_k` from `Σ_i Σ_{j≠i} z_ik z_jk Ω_ij` over all `k`.
    pub fn eigenvalue_identity_residual(&self) -> f64 {
        let n = self.n();
        let z = &self.spectral.vectors;
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if j != i {
                            s += z[(i, k)] * z[(j, k)] * self.omega[(i, j)];
                        }
                    }
                }
                (self.spectral.values[k] - s).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest violation of `λ_i(Ω) ≥ λ_i(Ω∖k) ≥ λ_{i+1}(Ω)` after deleting node `k`;
    /// zero when the spectra interlace.
    pub fn interlacing_violation(&self, k: usize) -> Result<f64> {
        let reduced = self.without(k)?;
        let full = self.eigenvalues();
        let red = reduced.eigenvalues();
        let mut worst: f64 = 0.0;
        for i in 0..red.len() {
            worst = worst.max(red[i] - full[i]).max(full[i + 1] - red[i]);
        }
        Ok(worst)
    }
}

/// Leading eigenvector of a symmetric matrix, oriented to be nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityVector {
    /// Unit L2 norm.
    pub values: DVector<f64>,
    pub leading_eigenvalue: f64,
    /// The oriented eigenvector still has entries below −1e-8, so the Perron–Frobenius
    /// guarantees do not apply (typically negative edge weights).
    pub non_perron: bool,
    /// `|λ_(1) − λ_(2)| < 1e-10`; the vector comes from the direct decomposition.
    pub degenerate: bool,
    /// Power-iteration steps taken (0 when the direct decomposition was used).
    pub iterations: usize,
}

impl CentralityVector {
    /// Index of the most central node; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.values.len() {
            if self.values[i] > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for i in 1..self.values.len() {
            if self.values[i] < self.values[best] {
                best = i;
            }
        }
        best
    }

    /// `‖λ_(1) v − A v‖_∞` for the matrix the vector was computed from.
    pub fn fixed_point_residual(&self, a: &DMatrix<f64>) -> f64 {
        (a * &self.values - &self.values * self.leading_eigenvalue).amax()
    }
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;

/// Eigenvector centrality `v = λ_(1)⁻¹ Ω v` of the network.
pub fn eigen_centrality(adj: &AdjacencyMatrix) -> Result<CentralityVector> {
    leading_eigenvector(&adj.omega, &adj.spectral)
}

/// Centrality of any symmetric matrix, such as `Ω + ηI` or `Ω̃`.
pub fn centrality_of(a: &DMatrix<f64>) -> Result<CentralityVector> {
    if !linalg::is_symmetric(a) {
        return Err(Error::Domain("centrality requires a symmetric matrix".into()));
    }
    leading_eigenvector(a, &Spectral::of_symmetric(a))
}

/// Power iteration on a Gershgorin-shifted matrix, cross-checked against the direct
/// eigendecomposition.
fn leading_eigenvector(a: &DMatrix<f64>, spectral: &Spectral) -> Result<CentralityVector> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::Dimension("centrality of an empty network".into()));
    }
    let lambda1 = spectral.values[0];
    let direct = spectral.vectors.column(0).into_owned();
    if n == 1 {
        return Ok(CentralityVector {
            values: DVector::from_element(1, 1.0),
            leading_eigenvalue: lambda1,
            non_perron: false,
            degenerate: false,
            iterations: 0,
        });
    }
    let degenerate = (lambda1 - spectral.values[1]).abs() < 1e-10;

    let (mut values, iterations) = if degenerate {
        (direct.clone(), 0)
    } else {
        match power_iteration(a) {
            Some((v, it)) if aligned(&v, &direct) => (v, it),
            _ => {
                log::debug!("power iteration disagreed with the direct solver; using the latter");
                (direct.clone(), 0)
            }
        }
    };

    let sum: f64 = values.sum();
    if sum < 0.0 || (sum == 0.0 && first_nonzero_negative(&values)) {
        values.neg_mut();
    }
    let non_perron = values.iter().any(|&x| x < -1e-8);
    if !non_perron {
        values.iter_mut().filter(|x| **x < 0.0).for_each(|x| *x = 0.0);
    }
    Ok(CentralityVector { values, leading_eigenvalue: lambda1, non_perron, degenerate, iterations })
}

fn first_nonzero_negative(v: &DVector<f64>) -> bool {
    v.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0)
}

fn aligned(v: &DVector<f64>, direct: &DVector<f64>) -> bool {
    let d = v.dot(direct).signum();
    (v - direct * d).amax() < 1e-8
}

/// Iterates `x ← (A + cI)x / ‖·‖` from the uniform vector, with `c` making `A + cI`
/// positive semidefinite so the dominant eigenvalue is the algebraically largest one.
fn power_iteration(a: &DMatrix<f64>) -> Option<(DVector<f64>, usize)> {
    let n = a.nrows();
    let shift = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum::<f64>() - a[(i, i)])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] += shift;
    }
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for it in 1..=POWER_MAX_ITER {
        let mut y = &b * &x;
        let norm = y.norm();
        if !(norm > 0.0) {
            return None;
        }
        y /= norm;
        let diff = (&y - &x).amax();
        x = y;
        if diff < POWER_TOL {
            return Some((x, it));
        }
    }
    None
}

/// Maximum centrality change under `Ω → Ω + ηI` and the error of the eigenvalue shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftCheck {
    pub deviation: f64,
    pub eigenvalue_error: f64,
}

/// Recomputes centrality on `Ω + ηI`; the centrality vector is unchanged and every
/// eigenvalue moves by exactly `η`.
pub fn shift_invariance_check(adj: &AdjacencyMatrix, eta: f64) -> Result<ShiftCheck> {
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("shift eta = {eta} must be positive")));
    }
    let mut shifted = adj.omega.clone();
    for i in 0..adj.n() {
        shifted[(i, i)] += eta;
    }
    let base = eigen_centrality(adj)?;
    let moved = centrality_of(&shifted)?;
    let spec = Spectral::of_symmetric(&shifted);
    let eigenvalue_error = spec
        .values
        .iter()
        .zip(adj.eigenvalues().iter())
        .map(|(s, l)| (s - l - eta).abs())
        .fold(0.0, f64::max);
    Ok(ShiftCheck { deviation: (&moved.values - &base.values).amax(), eigenvalue_error })
}

/// `Ω̃ = I − Γ̃` with its spectrum and centrality.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedAdjacency {
    omega_tilde: DMatrix<f64>,
    spectral: Spectral,
    centrality: CentralityVector,
    assumption3: bool,
}

pub fn transform(rm: &RiskMatrix) -> Result<TransformedAdjacency> {
    let n = rm.n();
    let omega_tilde = DMatrix::identity(n, n) - rm.gamma_sym();
    let spectral = Spectral::of_symmetric(&omega_tilde);
    let centrality = leading_eigenvector(&omega_tilde, &spectral)?;
    let assumption3 = spectral.values.iter().all(|&l| l > 0.0 && l < 1.0);
    Ok(TransformedAdjacency { omega_tilde, spectral, centrality, assumption3 })
}

impl TransformedAdjacency {
    pub fn n(&self) -> usize {
        self.omega_tilde.nrows()
    }

    pub fn omega_tilde(&self) -> &DMatrix<f64> {
        &self.omega_tilde
    }

    /// Eigenvalues `λ^Ω̃`, descending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.spectral.values
    }

    /// Eigenvectors `S`, one per column.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.spectral.vectors
    }

    /// Centrality `ṽ` of `Ω̃`.
    pub fn centrality(&self) -> &CentralityVector {
        &self.centrality
    }

    /// True when every eigenvalue of `Ω̃` lies strictly inside (0, 1).
    pub fn assumption3(&self) -> bool {
        self.assumption3
    }

    /// Largest gap between `1/(1 − λ^Ω̃_k)` and the eigenvalues of an explicitly
    /// inverted `Γ̃ = I − Ω̃`, both sorted descending.
    pub fn neumann_residual(&self) -> Result<f64> {
        let n = self.n();
        let gamma = DMatrix::identity(n, n) - &self.omega_tilde;
        let inv = gamma
            .try_inverse()
            .ok_or_else(|| Error::Singular("I − Ω̃ is not invertible".into()))?;
        let direct = Spectral::of_symmetric(&linalg::symmetrize(&inv)).values;
        let mut series: Vec<f64> = self.spectral.values.iter().map(|l| 1.0 / (1.0 - l)).collect();
        series.sort_by(|a, b| b.total_cmp(a));
        Ok(series.iter().zip(direct.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}
