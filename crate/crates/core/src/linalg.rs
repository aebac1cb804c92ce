//! Dense symmetric linear-algebra helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Components smaller than this are treated as zero by the eigenvector sign convention.
const SIGN_EPS: f64 = 1e-12;

/// Eigendecomposition `A = V·diag(values)·V'` of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order and every eigenvector is oriented so
/// that its first component with magnitude above `1e-12` is positive. This makes the
/// decomposition deterministic up to rotations within repeated eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectral {
    pub values: DVector<f64>,
    /// Columns are orthonormal eigenvectors.
    pub vectors: DMatrix<f64>,
}

impl Spectral {
    pub fn of_symmetric(a: &DMatrix<f64>) -> Spectral {
        let n = a.nrows();
        if n == 0 {
            return Spectral {
                values: DVector::zeros(0),
                vectors: DMatrix::zeros(0, 0),
            };
        }
        let eig = SymmetricEigen::new(a.clone());
        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort keeps the solver's order for exact ties.
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).clone_owned();
            if let Some(first) = col.iter().copied().find(|x| x.abs() > SIGN_EPS) {
                if first < 0.0 {
                    col.neg_mut();
                }
            }
            vectors.set_column(dst, &col);
        }
        Spectral { values, vectors }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `V·diag(values)·V'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    /// Applies `V·diag(f(values))·V'` to `x`.
    pub fn apply_fn(&self, x: &DVector<f64>, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut coords = self.vectors.tr_mul(x);
        for (c, &l) in coords.iter_mut().zip(self.values.iter()) {
            *c *= f(l);
        }
        &self.vectors * coords
    }

    /// Solves `A·x = b` through the cached decomposition.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        if self.values.iter().any(|&l| l.abs() <= 1e-14 * scale || l == 0.0) {
            return Err(Error::Singular(
                "matrix has a zero eigenvalue and cannot be inverted".into(),
            ));
        }
        Ok(self.apply_fn(b, |l| 1.0 / l))
    }

    pub fn max_abs_eigenvector_residual(&self, a: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for k in 0..self.len() {
            let v = self.vectors.column(k);
            let r = a * v - v * self.values[k];
            worst = worst.max(r.amax());
        }
        worst
    }
}

/// `(A + A')/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `w'·A·w`.
pub fn quad_form(a: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(a * w))
}

/// Principal submatrix with row and column `k` deleted.
pub fn remove_index(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    a.clone().remove_row(k).remove_column(k)
}

/// Principal submatrix keeping only the listed indices, in the listed order.
pub fn select(a: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(keep.len(), keep.len(), |i, j| a[(keep[i], keep[j])])
}

/// Largest absolute entry of `A − B`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn is_symmetric(a: &DMatrix<f64>) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..i).all(|j| a[(i, j)] == a[(j, i)]))
}
