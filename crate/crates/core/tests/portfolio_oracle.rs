mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tailrisk::netgraph::{self, AdjacencyMatrix};
use tailrisk::portfolio::{self, PruneConfig, StopReason};
use tailrisk::riskmatrix::{Mode, RiskMatrix};
use tailrisk::{Error, ReturnPanel};

fn rm_of(g: DMatrix<f64>) -> RiskMatrix {
    RiskMatrix::from_symmetric(g, Mode::Strict).unwrap()
}

fn random_rm(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> RiskMatrix {
    let (_, _, g) = random_gamma(r, n);
    RiskMatrix::from_gamma(g).unwrap().validate_pd(Mode::Strict).unwrap()
}

#[test]
fn gmvp_matches_projected_gradient() {
    let mut r = rng(31);
    for _ in 0..20 {
        let n = r.random_range(2..=8);
        let g = random_pd(&mut r, n, 0.2, 1.0);
        let w = portfolio::gmvp(&rm_of(g.clone())).unwrap().weights;
        let oracle = projected_gradient_gmvp(&g);
        assert!((&w - &oracle).amax() < 1e-6);
        assert!((w.sum() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn gmvp_small_examples() {
    let w = portfolio::gmvp(&rm_of(DMatrix::identity(4, 4))).unwrap();
    assert!(w.weights.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    let w = portfolio::gmvp(&rm_of(DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 0.09])))).unwrap();
    assert!((w.weights[0] - 9.0 / 13.0).abs() < 1e-12);
    assert!((w.weights[1] - 4.0 / 13.0).abs() < 1e-12);
}

#[test]
fn gmvp_survives_feasible_perturbations() {
    let mut r = rng(32);
    let g = random_pd(&mut r, 6, 0.05, 1.0);
    let w = portfolio::gmvp(&rm_of(g.clone())).unwrap().weights;
    let base = quad_form_loop(&g, &w);
    for _ in 0..100 {
        let mut d = DVector::from_fn(6, |_, _| normal(&mut r));
        let mean = d.mean();
        d.add_scalar_mut(-mean);
        let scale = r.random_range(0.0..0.1) / d.norm();
        let f = quad_form_loop(&g, &(&w + d * scale));
        assert!(f >= base - 1e-12);
    }
}

#[test]
fn long_only_matches_simplex_search() {
    let mut r = rng(33);
    for _ in 0..10 {
        let g = random_pd(&mut r, 5, 0.02, 1.0);
        let w = portfolio::gmvp_long_only(&rm_of(g.clone())).unwrap();
        assert!(w.long_only);
        assert!(w.weights.iter().all(|&x| x >= -1e-12));
        assert!((w.weights.sum() - 1.0).abs() < 1e-10);
        let (_, oracle) = simplex_search(&g, 20);
        let f = quad_form_loop(&g, &w.weights);
        assert!((f - oracle).abs() < 1e-8, "{f} vs {oracle}");
    }
}

#[test]
fn long_only_two_assets_against_line_search() {
    // Strong negative dependence pushes the unconstrained solution to a short position.
    let g = DMatrix::from_row_slice(2, 2, &[0.01, 0.015, 0.015, 0.09]);
    let unconstrained = portfolio::gmvp(&rm_of(g.clone())).unwrap();
    assert!(unconstrained.weights[1] < 0.0);
    let w = portfolio::gmvp_long_only(&rm_of(g.clone())).unwrap();
    // f(t) = t² a + 2t(1−t) b + (1−t)² c is minimized over [0, 1].
    let (a, b, c) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let t = ((c - b) / (a - 2.0 * b + c)).clamp(0.0, 1.0);
    assert!((w.weights[0] - t).abs() < 1e-12);
    assert_eq!(w.weights[0], 1.0);
    assert_eq!(w.weights[1], 0.0);
}

#[test]
fn long_only_equals_unconstrained_when_inactive() {
    let mut r = rng(34);
    let mut seen = 0;
    for _ in 0..50 {
        let rm = random_rm(&mut r, 5);
        let free = portfolio::gmvp(&rm).unwrap();
        if free.weights.iter().all(|&x| x > 0.0) {
            let lo = portfolio::gmvp_long_only(&rm).unwrap();
            assert!((&lo.weights - &free.weights).amax() < 1e-12);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

fn common_gamma_instance(r: &mut rand_chacha::ChaCha8Rng, n: usize, gamma: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let x = r.random_range(-0.5..1.0) * gamma / n as f64;
            g[(i, j)] = x;
            g[(j, i)] = x;
        }
    }
    g.fill_diagonal(gamma);
    g
}

#[test]
fn three_weight_forms_agree() {
    let mut r = rng(35);
    for _ in 0..20 {
        let g = common_gamma_instance(&mut r, 5, 0.05);
        let rm = rm_of(g.clone());
        let ta = netgraph::transform(&rm).unwrap();
        assert!(ta.assumption3());
        let w1 = portfolio::gmvp(&rm).unwrap().weights;
        let w2 = portfolio::gmvp_centrality_form(&ta).unwrap().weights;
        let w3 = portfolio::gmvp_common_gamma_form(&rm).unwrap().weights;
        let lu = lu_gmvp(&g);
        assert!((&w1 - &lu).amax() < 1e-10);
        assert!((&w1 - &w2).amax() < 1e-8);
        assert!((&w1 - &w3).amax() < 1e-8);
    }
}

#[test]
fn centrality_form_on_synthesized_spectrum() {
    let mut r = rng(36);
    for _ in 0..10 {
        let g = synthesize(&mut r, &[0.9, 0.5, 0.1]);
        let rm = rm_of(g.clone());
        let ta = netgraph::transform(&rm).unwrap();
        let w = portfolio::gmvp_centrality_form(&ta).unwrap().weights;
        assert!((&w - lu_gmvp(&g)).amax() < 1e-8);
    }
    let ta = netgraph::transform(&rm_of(DMatrix::identity(3, 3) * 2.0)).unwrap();
    assert!(matches!(portfolio::gmvp_centrality_form(&ta), Err(Error::Assumption(_))));
}

#[test]
fn condition_witnesses_match_exhaustive_scan() {
    let mut r = rng(37);
    for _ in 0..10 {
        let g = random_pd(&mut r, 5, 0.05, 0.9);
        let ta = netgraph::transform(&rm_of(g)).unwrap();
        let rep = portfolio::theorem2_conditions(&ta);
        let mut s = ta.eigenvectors().clone();
        let v = ta.centrality().values.clone();
        s.set_column(0, &v);
        let l1 = ta.eigenvalues()[0];
        let (mut w1, mut w3) = ((f64::INFINITY, (0, 0)), (f64::INFINITY, (0, 0)));
        for i in 0..5 {
            for k in 0..5 {
                let col: f64 = (0..5).map(|j| s[(j, k)]).sum();
                let m1 = col - 2.0 * s[(i, k)];
                let m3 = v[i] * col - s[(i, k)] / (1.0 - l1);
                if m1 < w1.0 {
                    w1 = (m1, (i, k));
                }
                if m3 < w3.0 {
                    w3 = (m3, (i, k));
                }
            }
        }
        assert_eq!(rep.column_sum.witness, Some(w1.1));
        assert_eq!(rep.centrality_dominance.witness, Some(w3.1));
        assert!((rep.column_sum.worst_margin - w1.0).abs() < 1e-12);
        assert_eq!(rep.centrality_mass.holds, v.sum() > 1.0);
    }
}

#[test]
fn risk_decomposition_against_double_loop() {
    let mut r = rng(38);
    for _ in 0..20 {
        let rm = random_rm(&mut r, 6);
        let w = DVector::from_fn(6, |_, _| normal(&mut r));
        let d = portfolio::portfolio_risk(&rm, &w).unwrap();
        assert!((d.total - quad_form_loop(rm.gamma_sym(), &w)).abs() < 1e-12);
        assert!((d.network_part - quad_form_loop(&hollow(rm.gamma_sym()), &w)).abs() < 1e-12);
        assert!((d.total - d.network_part - d.idiosyncratic_part).abs() < 1e-10);
    }
    let rm = rm_of(DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 0.09, 0.01])));
    let d = portfolio::portfolio_risk(&rm, &DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
    assert_eq!((d.total, d.network_part), (0.04, 0.0));
    let eq = DVector::from_element(3, 1.0 / 3.0);
    let d = portfolio::portfolio_risk(&rm, &eq).unwrap();
    assert!((d.total - 0.14 / 9.0).abs() < 1e-15);
    assert!(matches!(portfolio::portfolio_risk(&rm, &DVector::zeros(2)), Err(Error::Dimension(_))));
}

#[test]
fn delta_matches_scalar_reference() {
    let mut r = rng(39);
    for _ in 0..20 {
        let n = r.random_range(3..=7);
        let rm = random_rm(&mut r, n);
        let omega = hollow(rm.gamma_sym());
        for k in 0..n {
            let t = portfolio::delta_function(&rm, k, false).unwrap();
            let w_full = lu_gmvp(rm.gamma_sym());
            let w_red = lu_gmvp(&drop_index(rm.gamma_sym(), k));
            let reference = scalar_delta(&omega, k, &w_full, &w_red);
            assert!((t.delta - reference).abs() < 1e-10, "{} vs {reference}", t.delta);
        }
    }
}

#[test]
fn delta_reassembles_network_risk_change() {
    let mut r = rng(40);
    for _ in 0..20 {
        let rm = random_rm(&mut r, 6);
        for k in 0..6 {
            let t = portfolio::delta_function(&rm, k, false).unwrap();
            let w_full = lu_gmvp(rm.gamma_sym());
            let w_red = lu_gmvp(&drop_index(rm.gamma_sym(), k));
            let omega = hollow(rm.gamma_sym());
            let direct = quad_form_loop(&omega, &w_full) - quad_form_loop(&drop_index(&omega, k), &w_red);
            let assembled = t.delta + t.own_term + t.unpaired_term;
            assert!((assembled - direct).abs() < 1e-8, "{assembled} vs {direct}");
            assert!((t.delta_factored - t.delta_substituted).abs() < 1e-10);
        }
    }
}

#[test]
fn delta_zero_for_empty_network() {
    let rm = rm_of(DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 0.09, 0.05, 0.02])));
    for k in 0..4 {
        assert_eq!(portfolio::delta_function(&rm, k, false).unwrap().delta, 0.0);
    }
    let small = rm_of(DMatrix::identity(2, 2));
    assert!(matches!(portfolio::delta_function(&small, 0, false), Err(Error::TooSmall(_))));
}

#[test]
fn eigen_gap_expansion() {
    let mut r = rng(41);
    for _ in 0..10 {
        let rm = random_rm(&mut r, 6);
        let full = netgraph::adjacency(&rm);
        for k in 0..6 {
            let reduced = full.without(k).unwrap();
            let (lf, _) = sorted_eigen(full.omega());
            let (lr, _) = sorted_eigen(&drop_index(full.omega(), k));
            for s in 0..5 {
                let gap = portfolio::eigen_diff_decomposition(&full, &reduced, k, s).unwrap();
                assert!((gap.direct - (lf[s] - lr[s])).abs() < 1e-10);
                assert!((gap.expansion - gap.direct).abs() < 1e-8, "k {k} s {s}");
            }
        }
    }
    // Single link between nodes 0 and 1: spectrum (a, 0, −a); deleting node 2 leaves (a, −a).
    let mut o = DMatrix::zeros(3, 3);
    o[(0, 1)] = 0.3;
    o[(1, 0)] = 0.3;
    let full = AdjacencyMatrix::from_omega(o).unwrap();
    let reduced = full.without(2).unwrap();
    let gap = portfolio::eigen_diff_decomposition(&full, &reduced, 2, 0).unwrap();
    assert!(gap.direct.abs() < 1e-15 && gap.expansion.abs() < 1e-12);
    let gap = portfolio::eigen_diff_decomposition(&full, &reduced, 2, 1).unwrap();
    assert!((gap.direct - 0.3).abs() < 1e-12 && (gap.expansion - 0.3).abs() < 1e-8);
}

#[test]
fn min_risk_centrality_examples() {
    let n = 4;
    let w = DVector::from_element(n, 0.25);
    let v = netgraph::eigen_centrality(&AdjacencyMatrix::from_omega(DMatrix::from_element(n, n, 1.0) - DMatrix::identity(n, n)).unwrap()).unwrap();
    let m = portfolio::min_risk_centrality(&w, &v).unwrap();
    assert!(m.iter().all(|&x| (x + 2.0 / (n as f64).sqrt()).abs() < 1e-12));

    let mut r = rng(42);
    let w = DVector::from_fn(n, |i, _| if i == 0 { 0.0 } else { normal(&mut r) });
    let m = portfolio::min_risk_centrality(&w, &v).unwrap();
    assert_eq!(m[0], 0.0);
    let denom: f64 = (0..n).map(|j| w[j] * v.values[j]).sum();
    for i in 0..n {
        assert_eq!(m[i], -2.0 * w[i] / denom);
    }
    let zero = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
    assert!(matches!(portfolio::min_risk_centrality(&zero, &v), Err(Error::Degenerate(_))));
}

fn derivative_reference(w: &DVector<f64>, v: &DVector<f64>, lambda: f64, i: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..w.len() {
        s += w[j] * v[j];
    }
    lambda * v[i] * s * s + 2.0 * lambda * w[i] * s
}

fn derivative_of_first_asset(g: DMatrix<f64>) -> f64 {
    let rm = rm_of(g);
    let c = netgraph::eigen_centrality(&netgraph::adjacency(&rm)).unwrap();
    assert!(!c.non_perron && c.leading_eigenvalue > 0.0);
    let w = portfolio::gmvp(&rm).unwrap().weights;
    let d = portfolio::centrality_risk_derivative(&w, &c.values, c.leading_eigenvalue).unwrap();
    assert!((d[0] - derivative_reference(&w, &c.values, c.leading_eigenvalue, 0)).abs() < 1e-15);
    d[0]
}

#[test]
fn centrality_derivative_takes_both_signs() {
    let rising = DMatrix::from_row_slice(3, 3, &[0.091, 0.023, -0.009, 0.023, 0.064, 0.014, -0.009, 0.014, 0.083]);
    let falling = DMatrix::from_row_slice(3, 3, &[0.065, 0.023, 0.018, 0.023, 0.021, -0.012, 0.018, -0.012, 0.063]);
    assert!(derivative_of_first_asset(rising) > 0.0);
    assert!(derivative_of_first_asset(falling) < 0.0);
}

#[test]
fn nonnegative_fixtures_have_nonnegative_derivative() {
    let mut r = rng(43);
    for _ in 0..50 {
        let n = r.random_range(3..=8);
        let mut g = random_positive_graph(&mut r, n) * (0.5 / n as f64);
        g.fill_diagonal(1.0);
        let rm = rm_of(g);
        let c = netgraph::eigen_centrality(&netgraph::adjacency(&rm)).unwrap();
        let w = portfolio::gmvp_long_only(&rm).unwrap().weights;
        assert!(c.leading_eigenvalue > 0.0 && c.values.iter().all(|&x| x >= 0.0));
        let d = portfolio::centrality_risk_derivative(&w, &c.values, c.leading_eigenvalue).unwrap();
        assert!(d.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn prune_three_assets_removes_once() {
    let g = DMatrix::from_row_slice(3, 3, &[0.054, 0.018, 0.01, 0.018, 0.059, 0.014, 0.01, 0.014, 0.045]);
    let rm = rm_of(g.clone());
    let omega = hollow(&g);
    let (_, z) = sorted_eigen(&omega);
    let lead = z.column(0).map(f64::abs);
    let k = lead.argmax().0;
    let w_full = lu_gmvp(&g);
    let deltas: Vec<f64> = (0..3).map(|j| scalar_delta(&omega, j, &w_full, &lu_gmvp(&drop_index(&g, j)))).collect();
    assert!(deltas[k] < 0.0);

    let trace = portfolio::prune(&rm, PruneConfig::default()).unwrap();
    assert_eq!(trace.removals(), 1);
    assert_eq!(trace.steps[0].removed, Some(k));
    assert!((trace.steps[0].delta - deltas[k]).abs() < 1e-10);
    assert_eq!(trace.stop, StopReason::TooFewAssets);
    assert_eq!(trace.final_assets.len(), 2);
}

#[test]
fn prune_stops_when_delta_turns_nonnegative() {
    let g = DMatrix::from_row_slice(4, 4, &[
        0.036, 0.001, -0.006, 0.015, 0.001, 0.077, 0.029, 0.009, -0.006, 0.029, 0.085, 0.021, 0.015, 0.009, 0.021, 0.089,
    ]);
    let trace = portfolio::prune(&rm_of(g.clone()), PruneConfig::default()).unwrap();
    assert_eq!(trace.removals(), 1);
    assert_eq!(trace.stop, StopReason::DeltaNonNegative);
    assert!(trace.steps[0].delta < 0.0 && trace.steps[1].delta >= 0.0);
    // Risk after each step equals the reduced minimum recomputed from scratch.
    for step in &trace.steps {
        let keep: Vec<usize> = step.weights_after.assets.clone();
        let sub = DMatrix::from_fn(keep.len(), keep.len(), |a, b| g[(keep[a], keep[b])]);
        let w = lu_gmvp(&sub);
        assert!((step.risk_after - quad_form_loop(&sub, &w)).abs() < 1e-10);
    }
}

#[test]
fn prune_boundaries() {
    let diag = rm_of(DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 0.09, 0.05, 0.02])));
    let trace = portfolio::prune(&diag, PruneConfig::default()).unwrap();
    assert_eq!(trace.removals(), 0);
    assert_eq!(trace.steps[0].delta, 0.0);
    assert_eq!(trace.final_assets, vec![0, 1, 2, 3]);

    let mut r = rng(44);
    let rm = random_rm(&mut r, 6);
    let trace = portfolio::prune(&rm, PruneConfig { max_removals: Some(0), ..Default::default() }).unwrap();
    assert_eq!(trace.steps.len(), 1);
    assert_eq!(trace.removals(), 0);

    // Steps that remove an asset always carry a negative Δ.
    for _ in 0..20 {
        let rm = random_rm(&mut r, 7);
        let trace = portfolio::prune(&rm, PruneConfig::default()).unwrap();
        for s in &trace.steps {
            if s.removed.is_some() {
                assert!(s.delta < 0.0);
            }
            assert!((s.weights_after.weights.sum() - 1.0).abs() < 1e-10);
        }
        if trace.stop == StopReason::DeltaNonNegative {
            assert!(trace.steps.last().unwrap().delta >= 0.0);
        }
    }
}

#[test]
fn markowitz_limits() {
    let mut r = rng(45);
    let t = 50_000;
    let values = DMatrix::from_fn(t, 2, |_, c| if c == 0 { normal(&mut r) } else { 2.0 * normal(&mut r) });
    let panel = ReturnPanel::from_matrix(values, "asset");
    let b = portfolio::markowitz_baseline(&panel, 0..t).unwrap();
    assert!((b.weights.weights[0] - 0.8).abs() < 0.01);

    let values = DMatrix::from_fn(t, 4, |_, _| normal(&mut r));
    let b = portfolio::markowitz_baseline(&ReturnPanel::from_matrix(values, "asset"), 0..t).unwrap();
    assert!(b.weights.weights.iter().all(|&x| (x - 0.25).abs() < 0.02));

    let col: Vec<f64> = (0..100).map(|_| normal(&mut r)).collect();
    let dup = DMatrix::from_fn(100, 2, |i, _| col[i]);
    assert!(matches!(
        portfolio::markowitz_baseline(&ReturnPanel::from_matrix(dup, "asset"), 0..100),
        Err(Error::Singular(_))
    ));
}
