use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeagg::baselines::{lasso_identity, lasso_identity_recovers, signed_support};
use treeagg::experiments::*;
use treeagg_testkit::phi;

fn small(n: usize, p: usize, k: usize, reps: usize) -> ExperimentSpec {
    ExperimentSpec {
        n,
        p,
        k,
        s: 0.0,
        tau: 0.1,
        noise: NoiseRule::SignalRatio,
        seed: 7,
        replicates: reps,
    }
}

fn quick() -> SweepOptions {
    SweepOptions {
        n_alpha: 3,
        n_lambda: 10,
        ..SweepOptions::default()
    }
}

#[test]
fn scenarios_are_reproducible() {
    let spec = small(30, 12, 3, 1);
    let a = gen_scenario(&spec, 4, Truth::TreeCut).unwrap();
    let b = gen_scenario(&spec, 4, Truth::TreeCut).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.beta_star, b.beta_star);
    assert_eq!(a.x.to_dense(), b.x.to_dense());
    let c = gen_scenario(&spec, 5, Truth::TreeCut).unwrap();
    assert_ne!(a.y, c.y);
}

#[test]
fn planted_clusters_are_recovered_at_small_spread() {
    let spec = ExperimentSpec::low_dim(5);
    let hits = (0..100).filter(|&r| gen_scenario(&spec, r, Truth::Planted).unwrap().tree_matches_planted(5)).count();
    assert!(hits >= 99, "{} of 100", hits);
}

#[test]
fn truth_is_constant_on_groups() {
    let spec = ExperimentSpec {
        s: 0.5,
        ..small(40, 20, 4, 1)
    };
    let sc = gen_scenario(&spec, 0, Truth::TreeCut).unwrap();
    assert_eq!(sc.groups.len(), 4);
    for (g, leaves) in sc.groups.iter().enumerate() {
        assert!(leaves.iter().all(|&j| sc.beta_star[j] == sc.beta_tilde[g]));
    }
    assert_eq!(sc.beta_tilde.iter().filter(|&&b| b == 0.0).count(), 2);
    let (n, d) = (sc.y.len() as f64, sc.x.mul(&sc.beta_star));
    assert!((sc.sigma - d.norm() / (5.0 * n)).abs() < 1e-12);
    assert!(sc.b_star.len() <= 4);
}

#[test]
fn tiny_low_dimensional_sweep() {
    let rows = run_scenario_sweep(&small(40, 20, 5, 2), &[2, 5], &quick()).unwrap();
    for k in [2.0, 5.0] {
        let methods: Vec<&str> = rows.iter().filter(|r| r.setting == k).map(|r| r.method.as_str()).collect();
        assert_eq!(methods, ["ours", "oracle", "ols", "null"]);
    }
    assert!(rows.iter().all(|r| r.mean_err.is_finite() && r.se >= 0.0));
}

#[test]
fn tiny_high_dimensional_sweep() {
    let spec = ExperimentSpec {
        s: 0.2,
        ..small(20, 40, 5, 2)
    };
    let rows = run_scenario_sweep(&spec, &[5], &quick()).unwrap();
    let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["ours", "oracle", "lasso", "ridge", "null"]);
    let mut buf = Vec::new();
    write_table(&rows, "k", &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("k,method,mean_err,se\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn alpha_zero_only_grid_is_no_worse_than_lasso() {
    let spec = ExperimentSpec {
        s: 0.2,
        ..small(20, 40, 5, 1)
    };
    let sc = gen_scenario(&spec, 0, Truth::TreeCut).unwrap();
    let opts = SweepOptions {
        n_alpha: 1,
        n_lambda: 20,
        eps_abs: 1e-8,
        eps_rel: 1e-7,
        max_iter: 100_000,
        ..SweepOptions::default()
    };
    let methods = MethodSet {
        oracle: false,
        ols: false,
        lasso: true,
        ridge: false,
        null: false,
    };
    // fitted values are unique even where p > n leaves the coefficients free
    let errs = evaluate_methods(&sc, &opts, methods, ErrorMetric::Prediction).unwrap();
    assert_eq!(errs[0].0, "ours");
    assert!((errs[0].1 - errs[1].1).abs() <= 1e-3 * errs[1].1, "{:?}", errs);
}

#[test]
fn tiny_spread_matches_a_perfect_tree() {
    let spec = ExperimentSpec {
        tau: 0.01,
        ..small(60, 20, 4, 10)
    };
    let perfect = ExperimentSpec { tau: 1e-9, ..spec.clone() };
    let none = MethodSet {
        oracle: false,
        ols: false,
        lasso: false,
        ridge: false,
        null: false,
    };
    let diffs: Vec<f64> = (0..spec.replicates as u64)
        .map(|r| {
            let a = gen_scenario(&spec, r, Truth::Planted).unwrap();
            let b = gen_scenario(&perfect, r, Truth::Planted).unwrap();
            assert!(b.tree_matches_planted(4));
            let ea = evaluate_methods(&a, &quick(), none, ErrorMetric::Prediction).unwrap()[0].1;
            let eb = evaluate_methods(&b, &quick(), none, ErrorMetric::Prediction).unwrap()[0].1;
            ea - eb
        })
        .collect();
    let (m, se) = mean_se(&diffs);
    assert!(m.abs() <= 1.96 * se || diffs.iter().all(|d| d.abs() < 1e-12), "{} {}", m, se);
}

#[test]
fn distortion_sweep_rows() {
    let spec = small(40, 12, 3, 2);
    let rows = run_distortion_sweep(&spec, &[0.05, 0.2], &quick()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.method == "ours"));
    assert!(run_distortion_sweep(&spec, &[], &quick()).is_err());
    assert!(run_distortion_sweep(&spec, &[0.0], &quick()).is_err());
}

#[test]
fn least_squares_failure_single_column_is_exact() {
    // k = 4, eta = 1, sigma = 1: the bound is 2 Phi(-2).
    let rows = verify_ols_failure(&[50, 500], 4, 1.0, 1.0, 20_000, 0, 3).unwrap();
    for r in rows {
        assert!((r.bound - 2.0 * phi(-2.0)).abs() < 1e-10);
        assert!((r.exact - r.bound).abs() < 1e-13);
        assert!((r.empirical - r.exact).abs() <= 4.0 * r.se);
        assert!(r.pass);
    }
}

#[test]
fn least_squares_failure_with_companions() {
    let rows = verify_ols_failure(&[100, 1000], 3, 0.5, 1.0, 20_000, 5, 1).unwrap();
    for r in rows {
        // extra columns only add variance
        assert!(r.exact >= r.bound - 1e-12);
        assert!((r.empirical - r.exact).abs() <= 4.0 * r.se);
        assert!(r.pass);
    }
    assert!(verify_ols_failure(&[3], 4, 1.0, 1.0, 10, 0, 0).is_err());
    assert!(verify_ols_failure(&[10], 4, 0.0, 1.0, 10, 0, 0).is_err());
}

#[test]
fn threshold_search_agrees_with_a_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let beta = DVector::from_vec(vec![1.0, 1.0, -1.0, 0.0, 0.0, 0.0]);
    let target = signed_support(&beta);
    for _ in 0..300 {
        let y = DVector::from_fn(6, |i, _| beta[i] + rng.random_range(-1.2..1.2));
        let top = y.amax();
        let scan = (0..1000).any(|i| signed_support(&lasso_identity(&y, top * i as f64 / 1000.0)) == target);
        let fast = lasso_identity_recovers(&y, &beta);
        if scan {
            assert!(fast);
        }
        if fast {
            let nulls = y.rows(3, 3).amax();
            let signal = y.rows(0, 3).iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            assert_eq!(signed_support(&lasso_identity(&y, 0.5 * (nulls + signal))), target);
        }
    }
}

#[test]
fn noiseless_recovery_is_certain() {
    let r = verify_support_recovery(100, 4, 1.0, 0.0, 20, 0).unwrap();
    assert_eq!(r.oracle_rate, 1.0);
    assert_eq!(r.lasso_rate, 1.0);
}

#[test]
fn recovery_window_checks() {
    let (lo, hi) = recovery_window(10_000, 4, 1.0);
    let r = verify_support_recovery(10_000, 4, hi, 1.0, 200, 2).unwrap();
    assert!(r.oracle_rate >= 0.95);
    assert!(r.lasso_rate <= r.lasso_ceiling + 3.0 * r.lasso_se.max(0.01));
    assert!(r.separation_rate >= r.lasso_rate);
    assert!(verify_support_recovery(10_000, 4, lo * 0.9, 1.0, 10, 0).is_err());
    assert!(verify_support_recovery(10_000, 4, hi * 1.1, 1.0, 10, 0).is_err());
    // n = 40, k = 4 leaves no room between the two ends
    let (lo, hi) = recovery_window(40, 4, 1.0);
    assert!(lo > hi);
    assert!(verify_support_recovery(40, 4, 1.0, 1.0, 10, 0).is_err());
}

#[test]
fn bound_holds_with_little_noise() {
    let spec = ExperimentSpec {
        s: 0.25,
        noise: NoiseRule::Fixed(1e-4),
        ..small(40, 20, 4, 2)
    };
    let rep = verify_prediction_bound(&spec, None).unwrap();
    assert!(rep.pass && rep.tree_size_ok && rep.column_norm_ok);
    for r in &rep.replicates {
        assert!(!r.violated());
        let want = 48.0 * r.sigma * r.max_coef * (40f64.ln() / 40.0).sqrt() * r.support_size.min(r.b_star_size) as f64;
        assert!((r.rhs_simple - want).abs() <= 1e-12 * want);
        assert!((r.lambda - 8.0 * 1e-4 * (40f64.ln() / 40.0).sqrt()).abs() < 1e-15);
    }
}
