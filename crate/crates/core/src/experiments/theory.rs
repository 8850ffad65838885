use super::scenario::generate;
use super::{stream_rng, ExperimentSpec, Stream, Truth};
use crate::admm::{AdmmSolver, FitConfig};
use crate::baselines::{lasso_identity_recovers, lasso_identity_separates, oracle_lasso_identity, signed_support, BlockSpec};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// `(1/3) exp(1 / (pi/2 + 2)) sqrt(1/4 + 1/pi)`, the constant in the lower
/// bound `P(Z > z) >= c exp(-3 z^2 / 4)`.
pub fn c_tilde() -> f64 {
    use std::f64::consts::PI;
    (1.0 / (PI / 2.0 + 2.0)).exp() * (0.25 + 1.0 / PI).sqrt() / 3.0
}

/// Range of the smallest nonzero block coefficient for which the oracle
/// lasso recovers the signed support while the plain lasso cannot:
/// `[sigma sqrt(4k log(k^2 n) / n), sigma sqrt(log(2 c (k-1) n / k) / 3)]`.
pub fn recovery_window(n: usize, k: usize, sigma: f64) -> (f64, f64) {
    let (nf, kf) = (n as f64, k as f64);
    let lo = sigma * (4.0 * kf * (kf * kf * nf).ln() / nf).sqrt();
    let hi = sigma * ((2.0 * c_tilde() * (kf - 1.0) * nf / kf).ln() / 3.0).max(0.0).sqrt();
    (lo, hi)
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let m = trials as f64;
    let ph = successes as f64 / m;
    let z2 = z * z;
    let denom = 1.0 + z2 / m;
    let centre = (ph + z2 / (2.0 * m)) / denom;
    let half = z / denom * (ph * (1.0 - ph) / m + z2 / (4.0 * m * m)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn rate_se(successes: usize, trials: usize) -> (f64, f64) {
    let r = successes as f64 / trials as f64;
    (r, (r * (1.0 - r) / trials as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsRow {
    pub n: usize,
    /// Share of replicates with `|beta_hat_j - beta*_j| > eta`.
    pub empirical: f64,
    pub se: f64,
    /// `2 Phi(-eta sqrt(k) / sigma)`.
    pub bound: f64,
    /// Exact exceedance probability for this design.
    pub exact: f64,
    /// `empirical >= bound - 3 se`.
    pub pass: bool,
}

/// Design for the least-squares check: column 0 has ones in its first `k`
/// rows and zeros elsewhere; the other `companions` columns are `N(0, 1)`.
pub fn ols_failure_design(n: usize, k: usize, companions: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, n as u64, Stream::Design);
    let mut x = DMatrix::zeros(n, companions + 1);
    for i in 0..k.min(n) {
        x[(i, 0)] = 1.0;
    }
    for c in 1..=companions {
        for i in 0..n {
            x[(i, c)] = StandardNormal.sample(&mut rng);
        }
    }
    x
}

/// Exceedance frequency of the least-squares error in the sparse column.
///
/// For a fixed design, `beta_hat - beta* = sigma L^{-T} w` with
/// `L L^T = X^T X` and `w ~ N(0, I_p)`, so each replicate draws only `w`.
pub fn verify_ols_failure(
    n_values: &[usize],
    k: usize,
    eta: f64,
    sigma: f64,
    replicates: usize,
    companions: usize,
    seed: u64,
) -> Result<Vec<OlsRow>> {
    if k == 0 || replicates == 0 || !(eta > 0.0) || !(sigma > 0.0) {
        return Err(Error::Config("need k, replicates, eta and sigma positive".into()));
    }
    let bound = 2.0 * normal_cdf(-eta * (k as f64).sqrt() / sigma);
    n_values
        .iter()
        .map(|&n| {
            if n < k || n <= companions {
                return Err(Error::Config(format!("n = {} too small for k = {} and {} companions", n, k, companions)));
            }
            let x = ols_failure_design(n, k, companions, seed);
            let chol = x
                .tr_mul(&x)
                .cholesky()
                .ok_or(Error::SingularDesign { rank: 0, cols: companions + 1 })?;
            let p = companions + 1;
            let mut e0 = DVector::zeros(p);
            e0[0] = 1.0;
            // Row 0 of L^{-T} is (L^{-1} e_0)^T.
            let a = chol.l().solve_lower_triangular(&e0).expect("nonsingular factor");
            let exact = 2.0 * normal_cdf(-eta / (sigma * a.norm()));
            let mut rng = stream_rng(seed, n as u64, Stream::Noise);
            let mut hits = 0usize;
            let mut w = DVector::zeros(p);
            for _ in 0..replicates {
                w.iter_mut().for_each(|v: &mut f64| *v = StandardNormal.sample(&mut rng));
                if (sigma * a.dot(&w)).abs() > eta {
                    hits += 1;
                }
            }
            let (empirical, se) = rate_se(hits, replicates);
            Ok(OlsRow {
                n,
                empirical,
                se,
                bound,
                exact,
                pass: empirical >= bound - 3.0 * se,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub signal: f64,
    pub window: (f64, f64),
    pub c_tilde: f64,
    /// `sigma sqrt(log(k^2 n) / (k n))`.
    pub lambda: f64,
    pub replicates: usize,
    pub oracle_rate: f64,
    pub oracle_se: f64,
    pub oracle_ci: (f64, f64),
    /// `1 - 2 / sqrt(n)`.
    pub oracle_floor: f64,
    /// Best-over-path signed support recovery of the lasso.
    pub lasso_rate: f64,
    pub lasso_se: f64,
    pub lasso_ci: (f64, f64),
    /// Share of replicates where some lambda separates signal from null
    /// features, ignoring signs.
    pub separation_rate: f64,
    pub lasso_ceiling: f64,
}

/// Signed support recovery on the identity design with `k` blocks of size
/// `n / k`: blocks `1..k-1` carry `signal`, the last block is zero.
pub fn verify_support_recovery(
    n: usize,
    k: usize,
    signal: f64,
    sigma: f64,
    replicates: usize,
    seed: u64,
) -> Result<RecoveryReport> {
    if k < 2 || n % k != 0 {
        return Err(Error::Config(format!("need k >= 2 dividing n, got n = {}, k = {}", n, k)));
    }
    if replicates == 0 || !(sigma >= 0.0) {
        return Err(Error::Config("need replicates > 0 and sigma >= 0".into()));
    }
    let window = recovery_window(n, k, sigma);
    if sigma > 0.0 {
        if window.0 >= window.1 {
            return Err(Error::Config(format!(
                "empty signal window [{}, {}] for n = {}, k = {}, sigma = {}",
                window.0, window.1, n, k, sigma
            )));
        }
        let tol = 1e-12 * window.1;
        if signal <= window.0 || signal > window.1 + tol {
            return Err(Error::Config(format!(
                "signal {} outside the window ({}, {}]",
                signal, window.0, window.1
            )));
        }
    }
    let mut bt = DVector::from_element(k, signal);
    bt[k - 1] = 0.0;
    let spec = BlockSpec::new(k, n, bt)?;
    let beta_star = spec.beta_star();
    let target = signed_support(spec.beta_tilde());
    let (nf, kf) = (n as f64, k as f64);
    let lambda = sigma * ((kf * kf * nf).ln() / (kf * nf)).sqrt();

    let outcomes: Vec<(bool, bool, bool)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r, Stream::Noise);
            let y = DVector::from_fn(n, |i, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                beta_star[i] + sigma * z
            });
            let b = oracle_lasso_identity(&y, &spec, lambda);
            let oracle_ok = signed_support(&spec.block_means(&b)) == target;
            (
                oracle_ok,
                lasso_identity_recovers(&y, &beta_star),
                lasso_identity_separates(&y, &beta_star),
            )
        })
        .collect();
    let count = |f: fn(&(bool, bool, bool)) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let (o, l, s) = (count(|o| o.0), count(|o| o.1), count(|o| o.2));
    let (oracle_rate, oracle_se) = rate_se(o, replicates);
    let (lasso_rate, lasso_se) = rate_se(l, replicates);
    Ok(RecoveryReport {
        n,
        k,
        sigma,
        signal,
        window,
        c_tilde: c_tilde(),
        lambda,
        replicates,
        oracle_rate,
        oracle_se,
        oracle_ci: wilson_interval(o, replicates, 1.96),
        oracle_floor: 1.0 - 2.0 / nf.sqrt(),
        lasso_rate,
        lasso_se,
        lasso_ci: wilson_interval(l, replicates, 1.96),
        separation_rate: s as f64 / replicates as f64,
        lasso_ceiling: (-1.0f64).exp(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReplicate {
    pub sigma: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// `|A*|`, nonzero coefficients of `beta*`.
    pub support_size: usize,
    /// `|B*|`, size of the coarsest aggregating set.
    pub b_star_size: usize,
    /// `||beta*||_inf`.
    pub max_coef: f64,
    /// `||X beta_hat - X beta*||^2 / n`.
    pub lhs: f64,
    /// `3 lambda (alpha ||beta_tilde*||_1 + (1 - alpha) ||beta*||_1)`.
    pub rhs_full: f64,
    /// `48 sigma M sqrt(log(2p) / n) min(|A*|, |B*|)`.
    pub rhs_simple: f64,
    pub node_count: usize,
    /// `max_l ||X A_l||_2` over all nodes.
    pub max_column_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl BoundReplicate {
    pub fn violated(&self) -> bool {
        self.lhs > self.rhs_full
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub replicates: Vec<BoundReplicate>,
    pub violation_rate: f64,
    pub violation_se: f64,
    /// `1 / p`.
    pub allowed_rate: f64,
    /// `|T| <= 2p` on every replicate.
    pub tree_size_ok: bool,
    /// `max_l ||X A_l||_2 <= sqrt n` on every replicate.
    pub column_norm_ok: bool,
    pub pass: bool,
}

/// Checks the prediction error bound on `spec.replicates` scenario draws.
///
/// The design is rescaled to `||X 1||^2 = n` before the response is drawn;
/// `lambda = 8 sigma sqrt(log(2p) / n)` and
/// `alpha = |A*| / (|A*| + |B*|)` with `B*` the coarsest aggregating set of
/// `beta*` on the clustering tree.
pub fn verify_prediction_bound(spec: &ExperimentSpec, rho: Option<f64>) -> Result<BoundReport> {
    spec.validate()?;
    let (n, p) = (spec.n as f64, spec.p as f64);
    let reps: Vec<BoundReplicate> = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sc = generate(spec, r, Truth::TreeCut, true)?;
            let ones = sc.x.row_sums().norm_squared();
            if (ones - n).abs() > 1e-9 * n {
                return Err(Error::Config(format!("||X 1||^2 = {} but n = {}", ones, n)));
            }
            let lambda = 8.0 * sc.sigma * ((2.0 * p).ln() / n).sqrt();
            let support = sc.beta_star.iter().filter(|&&b| b != 0.0).count();
            let nb = sc.b_star.len();
            let alpha = support as f64 / (support + nb) as f64;
            if alpha > p / (p + 1.0) {
                return Err(Error::Config(format!("alpha = {} above p / (p + 1)", alpha)));
            }
            let tilde_l1: f64 = sc
                .b_star
                .nodes()
                .iter()
                .map(|&u| sc.beta_star[sc.tree.leaves_under(u)[0]].abs())
                .sum();
            let max_coef = sc.beta_star.amax();
            let rhs_full = 3.0 * lambda * (alpha * tilde_l1 + (1.0 - alpha) * sc.beta_star.lp_norm(1));
            let rhs_simple = 48.0 * sc.sigma * max_coef * ((2.0 * p).ln() / n).sqrt() * support.min(nb) as f64;

            let solver = AdmmSolver::new(&sc.x, &sc.y, &sc.tree, false)?;
            let cfg = FitConfig {
                lambda,
                alpha,
                rho: rho.unwrap_or_else(|| solver.design().scaled_rho()),
                eps_abs: 1e-7,
                eps_rel: 1e-6,
                max_iter: 50_000,
                ..FitConfig::default()
            };
            let fit = solver.fit(&cfg, None)?;
            let lhs = sc.x.mul(&(&fit.beta - &sc.beta_star)).norm_squared() / n;

            let max_column_norm = (0..sc.tree.node_count())
                .map(|u| sc.x.aggregate(&[sc.tree.leaves_under(u)]).norm())
                .fold(0.0, f64::max);
            Ok(BoundReplicate {
                sigma: sc.sigma,
                lambda,
                alpha,
                support_size: support,
                b_star_size: nb,
                max_coef,
                lhs,
                rhs_full,
                rhs_simple,
                node_count: sc.tree.node_count(),
                max_column_norm,
                converged: fit.converged,
                iterations: fit.iterations,
            })
        })
        .collect::<Result<_>>()?;
    let violations = reps.iter().filter(|r| r.violated()).count();
    let (violation_rate, violation_se) = rate_se(violations, reps.len());
    let allowed_rate = 1.0 / p;
    let tree_size_ok = reps.iter().all(|r| r.node_count as f64 <= 2.0 * p);
    let column_norm_ok = reps.iter().all(|r| r.max_column_norm <= n.sqrt() * (1.0 + 1e-9));
    Ok(BoundReport {
        pass: violation_rate <= allowed_rate + 3.0 * violation_se && tree_size_ok && column_norm_ok,
        replicates: reps,
        violation_rate,
        violation_se,
        allowed_rate,
        tree_size_ok,
        column_norm_ok,
    })
}
