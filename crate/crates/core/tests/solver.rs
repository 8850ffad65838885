use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use treeagg::admm::*;
use treeagg::baselines::{lasso_cd, lasso_cd_weighted, LassoOptions};
use treeagg::tree::{build_tree_hclust, Linkage};
use treeagg::{AggregationMatrix, CountDesign, FeatureTree};
use treeagg_testkit::{gamma_objective, prox_gradient_gamma};

struct Problem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    tree: FeatureTree,
}

fn problem(n: usize, p: usize, seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pois = Poisson::new(1.0).unwrap();
    let x = DMatrix::from_fn(n, p, |_, _| pois.sample(&mut rng));
    let pts = DMatrix::from_fn(p, 2, |_, _| rng.random_range(0.0..1.0));
    let tree = build_tree_hclust(&pts, Linkage::Complete).unwrap();
    let beta = DVector::from_fn(p, |j, _| if j < p / 2 { 1.0 } else { -0.5 });
    let noise = Normal::new(0.0, 0.5).unwrap();
    let y = &x * beta + DVector::from_fn(n, |_, _| noise.sample(&mut rng));
    Problem { x, y, tree }
}

fn tight(lambda: f64, alpha: f64) -> FitConfig {
    FitConfig {
        eps_abs: 1e-10,
        eps_rel: 1e-9,
        max_iter: 200_000,
        ..FitConfig::new(lambda, alpha)
    }
}

fn solver(pr: &Problem, intercept: bool) -> AdmmSolver {
    let x = CountDesign::from_dense(pr.x.clone()).unwrap();
    AdmmSolver::new(&x, &pr.y, &pr.tree, intercept).unwrap()
}

#[test]
fn matches_proximal_gradient() {
    let pr = problem(30, 10, 1);
    let s = solver(&pr, false);
    let a = AggregationMatrix::from_tree(&pr.tree).to_dense();
    let root = pr.tree.root();
    for (lambda, alpha) in [(0.1, 0.5), (0.3, 0.2), (0.05, 0.9)] {
        let fit = s.fit(&tight(lambda, alpha), None).unwrap();
        assert!(fit.converged);
        let g = prox_gradient_gamma(&pr.x, &pr.y, &a, root, lambda, alpha, 3000);
        let f_ref = gamma_objective(&pr.x, &pr.y, &a, root, &g, lambda, alpha);
        let f_ours = gamma_objective(&pr.x, &pr.y, &a, root, &fit.gamma, lambda, alpha);
        assert!((f_ours - f_ref).abs() <= 1e-5 * f_ref, "{} vs {}", f_ours, f_ref);
        assert!((fit.objective - f_ours).abs() <= 1e-10 * f_ours);
        assert!(kkt_residual(&s, &fit.gamma, lambda, alpha) <= 1e-4);
    }
}

#[test]
fn alpha_zero_is_the_lasso() {
    let pr = problem(40, 12, 2);
    let s = solver(&pr, false);
    for lambda in [0.02, 0.2, 1.0] {
        let fit = s.fit(&tight(lambda, 0.0), None).unwrap();
        let lasso = lasso_cd(&pr.x, &pr.y, lambda, false).unwrap();
        assert!((&fit.beta - &lasso.beta).amax() < 1e-5, "lambda {}", lambda);
        let f_lasso = s.objective(&lasso.beta, &fit.gamma, lambda, 0.0);
        assert!((fit.objective - f_lasso).abs() <= 1e-7 * f_lasso.max(1.0));
    }
}

#[test]
fn alpha_one_is_a_lasso_over_nodes() {
    let pr = problem(30, 8, 3);
    let s = solver(&pr, false);
    let a = AggregationMatrix::from_tree(&pr.tree).to_dense();
    let xa = &pr.x * &a;
    let root = pr.tree.root();
    let w: Vec<f64> = (0..a.ncols()).map(|u| if u == root { 0.0 } else { 1.0 }).collect();
    for lambda in [0.05, 0.5] {
        let fit = s.fit(&tight(lambda, 1.0), None).unwrap();
        let opts = LassoOptions {
            tol: 1e-10,
            ..LassoOptions::default()
        };
        let g = lasso_cd_weighted(&xa, &pr.y, lambda, &w, None, opts).unwrap().beta;
        let f_ref = gamma_objective(&pr.x, &pr.y, &a, root, &g, lambda, 1.0);
        assert!((fit.objective - f_ref).abs() <= 1e-6 * f_ref);
        // fitted values of a lasso are unique even when coefficients are not
        assert!((&xa * &fit.gamma - &xa * &g).amax() < 1e-3);
    }
}

#[test]
fn orthogonal_two_feature_case() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    let y = DVector::from_vec(vec![3.0, 1.0, -1.0, 0.5]);
    let tree = FeatureTree::star(2).unwrap();
    let xd = CountDesign::from_dense(x).unwrap();
    let s = AdmmSolver::new(&xd, &y, &tree, false).unwrap();
    // X^T y / n = (1, -0.125) and X^T X / n = I / 2
    let fit = s.fit(&tight(0.2, 0.0), None).unwrap();
    assert!((fit.beta[0] - 1.6).abs() < 1e-7);
    assert!(fit.beta[1].abs() < 1e-7);
    let exact = DVector::from_vec(vec![1.6, 0.0, 0.0]);
    assert!(kkt_residual(&s, &exact, 0.2, 0.0) < 1e-12);
}

#[test]
fn single_feature_root_only_penalized_through_beta() {
    let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 0.0, 3.0, 1.0]);
    let y = DVector::from_vec(vec![1.0, 2.5, -0.5, 2.0, 1.5]);
    let tree = FeatureTree::star(1).unwrap();
    let s = AdmmSolver::new(&CountDesign::from_dense(x.clone()).unwrap(), &y, &tree, false).unwrap();
    let z = (x.transpose() * &y)[0] / 5.0;
    let d = x.norm_squared() / 5.0;
    for (lambda, alpha) in [(0.1, 0.0), (0.5, 0.5), (0.5, 1.0), (10.0, 0.3)] {
        let c = lambda * (1.0 - alpha);
        let want = (z.abs() - c).max(0.0) * z.signum() / d;
        let fit = s.fit(&tight(lambda, alpha), None).unwrap();
        assert!((fit.beta[0] - want).abs() < 1e-6, "{} {}", lambda, alpha);
    }
}

#[test]
fn kkt_grows_away_from_the_solution() {
    let pr = problem(30, 10, 4);
    let s = solver(&pr, false);
    let fit = s.fit(&tight(0.1, 0.5), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = DVector::from_fn(fit.gamma.len(), |_, _| rng.random_range(-1.0..1.0));
    let r: Vec<f64> = [0.0, 1e-3, 1e-2, 1e-1, 1.0]
        .iter()
        .map(|&t| kkt_residual(&s, &(&fit.gamma + &dir * t), 0.1, 0.5))
        .collect();
    assert!(r[0] < 1e-4);
    assert!(r.windows(2).all(|w| w[1] > w[0]), "{:?}", r);
}

#[test]
fn objective_never_exceeds_the_zero_fit() {
    let pr = problem(25, 9, 5);
    let s = solver(&pr, false);
    let zero_b = DVector::zeros(9);
    let zero_g = DVector::zeros(pr.tree.node_count());
    for &lambda in &[1e-3, 0.05, 0.5, 5.0] {
        for &alpha in &[0.0, 0.4, 1.0] {
            let fit = s.fit(&tight(lambda, alpha), None).unwrap();
            let f0 = s.objective(&zero_b, &zero_g, lambda, alpha);
            assert!(fit.objective <= f0 * (1.0 + 1e-6), "{} {} {} {}", lambda, alpha, fit.objective, f0);
            let recomputed = s.objective(&fit.beta, &fit.gamma, lambda, alpha);
            assert!((recomputed - fit.objective).abs() <= 1e-12 * f0.max(1.0));
        }
    }
}

#[test]
fn returned_beta_is_consensus_feasible() {
    let pr = problem(20, 15, 6);
    let s = solver(&pr, false);
    let fit = s.fit(&FitConfig::new(0.05, 0.5), None).unwrap();
    let a = AggregationMatrix::from_tree(&pr.tree);
    assert!((a.mul(&fit.gamma) - &fit.beta).amax() < 1e-12);
    assert!(fit.primal_residual.is_finite() && fit.dual_residual.is_finite());
}

#[test]
fn zero_above_lambda_max() {
    let pr = problem(30, 10, 7);
    let s = solver(&pr, false);
    for alpha in [0.0, 0.5, 0.9] {
        let top = lambda_max(s.design(), alpha);
        let fit = s.fit(&tight(top * 1.01, alpha), None).unwrap();
        assert!(fit.beta.amax() < 1e-6, "alpha {}", alpha);
        let exact = lambda_max_exact(&s, alpha);
        assert!(exact <= top * (1.0 + 1e-9));
        let below = s.fit(&tight(exact * 0.9, alpha), None).unwrap();
        assert!(below.beta.amax() > 1e-8);
    }
}

#[test]
fn intercept_centers_the_residuals() {
    let pr = problem(30, 10, 8);
    let y = pr.y.add_scalar(7.0);
    let x = CountDesign::from_dense(pr.x.clone()).unwrap();
    let s = AdmmSolver::new(&x, &y, &pr.tree, true).unwrap();
    let cfg = FitConfig {
        intercept: true,
        ..tight(0.1, 0.5)
    };
    let fit = s.fit(&cfg, None).unwrap();
    let resid = &y - &pr.x * &fit.beta;
    let resid = resid.add_scalar(-fit.intercept);
    assert!(resid.mean().abs() < 1e-8);
    // a constant shift only moves the intercept
    let s0 = AdmmSolver::new(&x, &pr.y, &pr.tree, true).unwrap();
    let fit0 = s0.fit(&cfg, None).unwrap();
    assert!((&fit0.beta - &fit.beta).amax() < 1e-6);
    assert!((fit.intercept - fit0.intercept - 7.0).abs() < 1e-6);
    // the prepared design and the config must agree
    assert!(s0.fit(&tight(0.1, 0.5), None).is_err());
}

#[test]
fn homogeneous_in_y_and_lambda() {
    let pr = problem(30, 10, 10);
    let x = CountDesign::from_dense(pr.x.clone()).unwrap();
    let base = fit(&x, &pr.y, &pr.tree, &tight(0.1, 0.4), None).unwrap();
    for c in [0.5, 3.0] {
        let scaled = fit(&x, &(&pr.y * c), &pr.tree, &tight(0.1 * c, 0.4), None).unwrap();
        assert!((&scaled.beta - &base.beta * c).amax() < 1e-5 * c);
    }
}

#[test]
fn path_matches_single_fits_and_warm_starts_help() {
    let pr = problem(30, 10, 11);
    let s = solver(&pr, false);
    let cfg = tight(0.0, 0.0);
    let one = s.fit_path(&[(0.1, 0.5)], &cfg).unwrap();
    let direct = s.fit(&tight(0.1, 0.5), None).unwrap();
    assert_eq!(one[0].beta, direct.beta);
    assert_eq!(one[0].iterations, direct.iterations);

    let grid = default_grid(s.design(), 3, 8, 1e-2);
    let path = s.fit_path(&grid, &cfg).unwrap();
    assert_eq!(path.len(), grid.len());
    for (f, &(l, a)) in path.iter().zip(&grid) {
        assert_eq!((f.lambda, f.alpha), (l, a));
        let cold = s.fit(&tight(l, a), None).unwrap();
        assert!((&f.beta - &cold.beta).amax() < 1e-5);
    }

    let first = s.fit(&tight(0.2, 0.5), None).unwrap();
    let cold = s.fit(&tight(0.18, 0.5), None).unwrap();
    let warm = s.fit(&tight(0.18, 0.5), Some(&first)).unwrap();
    assert!(warm.iterations <= cold.iterations);
}

#[test]
fn non_convergence_is_reported() {
    let pr = problem(30, 10, 12);
    let s = solver(&pr, false);
    let cfg = FitConfig {
        max_iter: 3,
        ..tight(0.1, 0.5)
    };
    let fit = s.fit(&cfg, None).unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.iterations, 3);
}

#[test]
fn rejects_bad_input() {
    let pr = problem(10, 4, 13);
    let x = CountDesign::from_dense(pr.x.clone()).unwrap();
    assert!(AdmmSolver::new(&x, &pr.y, &FeatureTree::star(5).unwrap(), false).is_err());
    assert!(AdmmSolver::new(&x, &DVector::zeros(9), &pr.tree, false).is_err());
    let mut y = pr.y.clone();
    y[0] = f64::NAN;
    assert!(AdmmSolver::new(&x, &y, &pr.tree, false).is_err());
    let s = solver(&pr, false);
    for cfg in [
        FitConfig::new(-1.0, 0.5),
        FitConfig::new(0.1, 1.5),
        FitConfig { rho: 0.0, ..FitConfig::new(0.1, 0.5) },
        FitConfig { max_iter: 0, ..FitConfig::new(0.1, 0.5) },
    ] {
        assert!(s.fit(&cfg, None).is_err());
    }
}

#[test]
fn sparse_design_gives_the_same_fit() {
    let pr = problem(30, 10, 14);
    let dense = CountDesign::from_dense(pr.x.clone()).unwrap();
    let sparse = CountDesign::from_sparse(treeagg::CscMatrix::from_dense(&pr.x)).unwrap();
    let a = fit(&dense, &pr.y, &pr.tree, &tight(0.1, 0.5), None).unwrap();
    let b = fit(&sparse, &pr.y, &pr.tree, &tight(0.1, 0.5), None).unwrap();
    assert!((a.beta - b.beta).amax() < 1e-8);
}

#[test]
fn wide_design_branch() {
    let pr = problem(12, 30, 15);
    let s = solver(&pr, false);
    let fit = s.fit(&tight(0.05, 0.5), None).unwrap();
    assert!(fit.converged);
    assert!(kkt_residual(&s, &fit.gamma, 0.05, 0.5) < 1e-4);
}
