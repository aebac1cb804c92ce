//! Random instance generators and brute-force reference implementations shared by the
//! integration tests. Nothing here calls into the library's numerics.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
    g.qr().q()
}

/// `U diag(λ) U'` with the given eigenvalues.
pub fn synthesize(rng: &mut ChaCha8Rng, eigenvalues: &[f64]) -> DMatrix<f64> {
    let n = eigenvalues.len();
    let u = random_orthogonal(rng, n);
    let m = &u * DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues)) * u.transpose();
    (&m + m.transpose()) * 0.5
}

/// Symmetric positive definite matrix with eigenvalues uniform in `[lo, hi]`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let ev: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    synthesize(rng, &ev)
}

/// Asymmetric Γ built the tail-forecast way, with a positive definite symmetric part.
pub fn random_gamma(rng: &mut ChaCha8Rng, n: usize) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let v = DVector::from_fn(n, |_, _| rng.random_range(0.02f64..0.1));
    let spread = if n > 1 { 1.0 / (n - 1) as f64 } else { 1.0 };
    let dc = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(-0.2..0.9) * spread });
    let g = DMatrix::from_fn(n, n, |i, j| if i == j { v[i] } else { (v[i] * v[j]).sqrt() * dc[(i, j)] });
    (v, dc, g)
}

/// Symmetric hollow matrix with positive weights, so the Perron vector is positive.
pub fn random_positive_graph(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let w = rng.random_range(0.05..1.0);
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    a
}

pub fn quad_form_loop(a: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            s += w[i] * w[j] * a[(i, j)];
        }
    }
    s
}

pub fn hollow(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut o = a.clone();
    o.fill_diagonal(0.0);
    o
}

pub fn drop_index(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    a.clone().remove_row(k).remove_column(k)
}

/// Eigenpairs sorted by descending eigenvalue.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(a.clone());
    let mut idx: Vec<usize> = (0..a.nrows()).collect();
    idx.sort_by(|&x, &y| e.eigenvalues[y].total_cmp(&e.eigenvalues[x]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Minimizes `w'Gw` subject to `Σw = 1` by projected gradient descent.
pub fn projected_gradient_gmvp(g: &DMatrix<f64>) -> DVector<f64> {
    let n = g.nrows();
    let (vals, _) = sorted_eigen(g);
    let step = 1.0 / (2.0 * vals[0]);
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..1_000_000 {
        let grad = g * &w * 2.0;
        let mean = grad.sum() / n as f64;
        let proj = grad.map(|x| x - mean);
        let next = &w - proj * step;
        let change = (&next - &w).amax();
        w = next;
        if change < 1e-15 {
            break;
        }
    }
    w
}

/// Long-only minimum of `w'Gw` on the simplex: coarse grid search followed by exact
/// pairwise transfers until no pair improves.
pub fn simplex_search(g: &DMatrix<f64>, grid: usize) -> (DVector<f64>, f64) {
    let n = g.nrows();
    let mut best = DVector::from_element(n, 1.0 / n as f64);
    let mut best_f = quad_form_loop(g, &best);
    let mut counts = vec![0usize; n];
    enumerate_compositions(grid, n, 0, &mut counts, &mut |c| {
        let w = DVector::from_fn(n, |i, _| c[i] as f64 / grid as f64);
        let f = quad_form_loop(g, &w);
        if f < best_f {
            best_f = f;
            best = w;
        }
    });
    let mut w = best;
    for _ in 0..100_000 {
        let mut improved = false;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                // Move t from j to i: f(t) = f + 2t(g_i − g_j) + t²(G_ii + G_jj − 2G_ij).
                let grad = g * &w;
                let slope = 2.0 * (grad[i] - grad[j]);
                let curv = g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)];
                if curv <= 0.0 {
                    continue;
                }
                let t = (-slope / (2.0 * curv)).clamp(-w[i], w[j]);
                if t.abs() > 1e-16 && slope * t + curv * t * t < -1e-20 {
                    w[i] += t;
                    w[j] -= t;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let f = quad_form_loop(g, &w);
    (w, f)
}

fn enumerate_compositions(total: usize, n: usize, pos: usize, counts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if pos == n - 1 {
        counts[pos] = total;
        f(counts);
        return;
    }
    for c in 0..=total {
        counts[pos] = c;
        enumerate_compositions(total - c, n, pos + 1, counts, f);
    }
}

/// Scalar evaluation of the Δ criterion from its definition:
/// `Σ_{i<N} (λ_i − μ_i) a_i² + μ_i (a_i² − b_i²)` with `a_i = Σ_{j≠k} w_j z_ji` and
/// `b_i = Σ_j w∖k_j y_ji`, eigenpairs paired in descending order.
pub fn scalar_delta(omega: &DMatrix<f64>, k: usize, w_full: &DVector<f64>, w_red: &DVector<f64>) -> f64 {
    let n = omega.nrows();
    let (lam, z) = sorted_eigen(omega);
    let (mu, y) = sorted_eigen(&drop_index(omega, k));
    let mut total = 0.0;
    for i in 0..n - 1 {
        let mut a = 0.0;
        for j in 0..n {
            if j != k {
                a += w_full[j] * z[(j, i)];
            }
        }
        let mut b = 0.0;
        for j in 0..n - 1 {
            b += w_red[j] * y[(j, i)];
        }
        total += (lam[i] - mu[i]) * a * a + mu[i] * (a * a - b * b);
    }
    total
}

/// Closed-form `G⁻¹1 / 1'G⁻¹1` via LU, independent of the spectral path.
pub fn lu_gmvp(g: &DMatrix<f64>) -> DVector<f64> {
    let ones = DVector::from_element(g.nrows(), 1.0);
    let x = g.clone().lu().solve(&ones).expect("nonsingular");
    let s = x.sum();
    x / s
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Minimizes `c'x` subject to `Ax = b`, `x ≥ 0`, `b ≥ 0`, starting from the basis
/// `basis`, with Bland's anti-cycling rule.
pub fn tableau_simplex(a: &DMatrix<f64>, b: &[f64], c: &[f64], mut basis: Vec<usize>) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut t = DMatrix::zeros(m, n + 1);
    for i in 0..m {
        for j in 0..n {
            t[(i, j)] = a[(i, j)];
        }
        t[(i, n)] = b[i];
    }
    for _ in 0..100_000 {
        // Reduced costs c_j - c_B' B^-1 A_j, with the tableau kept in canonical form.
        let mut entering = None;
        for j in 0..n {
            if basis.contains(&j) {
                continue;
            }
            let mut rc = c[j];
            for i in 0..m {
                rc -= c[basis[i]] * t[(i, j)];
            }
            if rc < -1e-10 {
                entering = Some(j);
                break;
            }
        }
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[(i, e)] > 1e-12 {
                let ratio = t[(i, n)] / t[(i, e)];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("bounded LP");
        let piv = t[(r, e)];
        for j in 0..=n {
            t[(r, j)] /= piv;
        }
        for i in 0..m {
            if i != r {
                let f = t[(i, e)];
                if f != 0.0 {
                    for j in 0..=n {
                        t[(i, j)] -= f * t[(r, j)];
                    }
                }
            }
        }
        basis[r] = e;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        x[basis[i]] = t[(i, n)];
    }
    x
}

/// Quantile-regression coefficients from the split-residual LP
/// `min τ1'u + (1−τ)1'v` subject to `Xβ⁺ − Xβ⁻ + u − v = y`.
pub fn lp_oracle(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Vec<f64> {
    let (n, p) = x.shape();
    let cols = 2 * p + 2 * n;
    let mut a = DMatrix::zeros(n, cols);
    let mut b = vec![0.0; n];
    let mut basis = vec![0; n];
    for i in 0..n {
        let s = if y[i] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..p {
            a[(i, k)] = s * x[(i, k)];
            a[(i, p + k)] = -s * x[(i, k)];
        }
        a[(i, 2 * p + i)] = s;
        a[(i, 2 * p + n + i)] = -s;
        b[i] = s * y[i];
        basis[i] = if s > 0.0 { 2 * p + i } else { 2 * p + n + i };
    }
    let mut c = vec![0.0; cols];
    for i in 0..n {
        c[2 * p + i] = tau;
        c[2 * p + n + i] = 1.0 - tau;
    }
    let sol = tableau_simplex(&a, &b, &c, basis);
    (0..p).map(|k| sol[k] - sol[p + k]).collect()
}

/// Heteroscedastic linear model with an intercept column and `regressors` Gaussian
/// regressors.
pub fn random_instance(seed: u64, n: usize, regressors: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = rng(seed);
    let x = DMatrix::from_fn(n, regressors + 1, |_, k| {
        if k == 0 {
            1.0
        } else {
            normal(&mut rng)
        }
    });
    let y = (0..n)
        .map(|i| {
            let e = normal(&mut rng);
            0.3 + 0.8 * x[(i, 1)] - 0.5 * x[(i, regressors)] + e * (1.0 + 0.5 * f64::abs(x[(i, 1)]))
        })
        .collect();
    (x, y)
}
