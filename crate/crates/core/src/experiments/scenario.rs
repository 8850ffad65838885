use super::{mean_se, stream_rng, ExperimentSpec, NoiseRule, Stream, TableRow};
use crate::admm::{default_grid, log_grid, AdmmSolver, FitConfig};
use crate::baselines::{lasso_cd_weighted, ols, LassoOptions};
use crate::error::{Error, Result};
use crate::linop::{normalize_for_theory, CountDesign};
use crate::selection::ridge_svd;
use crate::tree::{build_tree_hclust, coarsest_aggregating_set, cut_tree_k, AggregatingSet, FeatureTree, Linkage};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;

/// Which aggregation generates `beta*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    /// The `k` subtrees obtained by cutting the clustering tree.
    TreeCut,
    /// The planted latent clusters, whatever tree the clustering produces.
    Planted,
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub x: CountDesign,
    pub y: DVector<f64>,
    pub tree: FeatureTree,
    pub beta_star: DVector<f64>,
    pub beta_tilde: DVector<f64>,
    /// True groups of features, in the order of `beta_tilde`.
    pub groups: Vec<Vec<usize>>,
    /// Coarsest aggregating set of `beta_star` on `tree`.
    pub b_star: AggregatingSet,
    pub sigma: f64,
    /// Planted cluster of every feature.
    pub planted: Vec<usize>,
}

impl Scenario {
    /// Whether cutting the tree into `k` subtrees gives back the planted
    /// clusters exactly.
    pub fn tree_matches_planted(&self, k: usize) -> bool {
        let Ok(cut) = cut_tree_k(&self.tree, k) else {
            return false;
        };
        cut.nodes().iter().all(|&u| {
            let leaves = self.tree.leaves_under(u);
            let c = self.planted[leaves[0]];
            leaves.iter().all(|&j| self.planted[j] == c)
                && leaves.len() == self.planted.iter().filter(|&&q| q == c).count()
        })
    }
}

/// Vertices of a regular simplex with unit-vector spacing (edge `sqrt 2`) in
/// `k - 1` dimensions, one per row. For `k = 1` a single origin in one
/// dimension.
pub fn simplex_vertices(k: usize) -> DMatrix<f64> {
    if k <= 1 {
        return DMatrix::zeros(k, 1);
    }
    // Coordinates of e_i in an orthonormal (Helmert) basis of 1-perp.
    DMatrix::from_fn(k, k - 1, |i, c| {
        let m = (c + 1) as f64;
        let scale = 1.0 / (m * (m + 1.0)).sqrt();
        if i < c + 1 {
            scale
        } else if i == c + 1 {
            -m * scale
        } else {
            0.0
        }
    })
}

/// Draws one replicate of the clustered-feature simulation.
///
/// Features are ordered by planted cluster (`p / k` consecutive features
/// each). Latent vectors are the cluster's simplex vertex plus
/// `N(0, tau^2 I)` noise; the tree is a complete-linkage clustering of them.
/// The first `k s` group coefficients are zero and the others are `N(0, 4)`.
pub fn gen_scenario(spec: &ExperimentSpec, replicate: u64, truth: Truth) -> Result<Scenario> {
    generate(spec, replicate, truth, false)
}

/// As `gen_scenario`; with `normalize` the design is rescaled to
/// `||X 1||^2 = n` before the response is drawn.
pub(super) fn generate(spec: &ExperimentSpec, replicate: u64, truth: Truth, normalize: bool) -> Result<Scenario> {
    spec.validate()?;
    let (n, p, k) = (spec.n, spec.p, spec.k);
    let size = p / k;
    let planted: Vec<usize> = (0..p).map(|j| j / size).collect();

    let mu = simplex_vertices(k);
    let dim = mu.ncols();
    let mut rng = stream_rng(spec.seed, replicate, Stream::Latent);
    let mut latent = DMatrix::zeros(p, dim);
    for j in 0..p {
        for c in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            latent[(j, c)] = mu[(planted[j], c)] + spec.tau * z;
        }
    }
    let tree = build_tree_hclust(&latent, Linkage::Complete)?;

    let groups: Vec<Vec<usize>> = match truth {
        Truth::TreeCut => {
            let cut = cut_tree_k(&tree, k)?;
            let mut g: Vec<Vec<usize>> = cut
                .nodes()
                .iter()
                .map(|&u| {
                    let mut l = tree.leaves_under(u).to_vec();
                    l.sort_unstable();
                    l
                })
                .collect();
            g.sort_by_key(|l| l[0]);
            g
        }
        Truth::Planted => (0..k).map(|c| (c * size..(c + 1) * size).collect()).collect(),
    };

    let mut rng = stream_rng(spec.seed, replicate, Stream::Coefficients);
    let normal = Normal::new(0.0, 2.0).expect("valid normal");
    let mut beta_tilde = DVector::from_fn(k, |_, _| normal.sample(&mut rng));
    for v in beta_tilde.iter_mut().take(spec.zero_groups()) {
        *v = 0.0;
    }
    let mut beta_star = DVector::zeros(p);
    for (g, leaves) in groups.iter().enumerate() {
        for &j in leaves {
            beta_star[j] = beta_tilde[g];
        }
    }
    let b_star = coarsest_aggregating_set(&tree, &beta_star, 0.0);

    let mut rng = stream_rng(spec.seed, replicate, Stream::Design);
    let pois = Poisson::new(0.1).expect("valid rate");
    let xd = DMatrix::from_fn(n, p, |_, _| pois.sample(&mut rng));
    let mut x = CountDesign::from_dense(xd)?;
    if normalize {
        x = normalize_for_theory(&x)?;
    }

    let signal = x.mul(&beta_star);
    let sigma = match spec.noise {
        NoiseRule::SignalRatio => signal.norm() / (5.0 * n as f64),
        NoiseRule::Fixed(s) => s,
    };
    let mut rng = stream_rng(spec.seed, replicate, Stream::Noise);
    let y = DVector::from_fn(n, |i, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        signal[i] + sigma * z
    });

    Ok(Scenario {
        x,
        y,
        tree,
        beta_star,
        beta_tilde,
        groups,
        b_star,
        sigma,
        planted,
    })
}

/// Baselines to run next to the tree estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodSet {
    pub oracle: bool,
    pub ols: bool,
    pub lasso: bool,
    pub ridge: bool,
    pub null: bool,
}

impl MethodSet {
    /// OLS when `n > p`, lasso and ridge otherwise; oracle and null always.
    pub fn for_dims(n: usize, p: usize) -> Self {
        Self {
            oracle: true,
            ols: n > p,
            lasso: n <= p,
            ridge: n <= p,
            null: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub n_alpha: usize,
    pub n_lambda: usize,
    /// Smallest over largest lambda on each path.
    pub lambda_ratio: f64,
    /// ADMM penalty parameter; `None` picks `DesignOperators::scaled_rho`.
    pub rho: Option<f64>,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// `None` picks by the dimensions of the spec.
    pub methods: Option<MethodSet>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            n_alpha: 8,
            n_lambda: 50,
            lambda_ratio: 1e-4,
            rho: None,
            eps_abs: 1e-5,
            eps_rel: 1e-4,
            max_iter: 10_000,
            methods: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    /// `||beta_hat - beta*||^2 / p`.
    Estimation,
    /// `||X (beta_hat - beta*)||^2 / n`.
    Prediction,
}

fn error_of(sc: &Scenario, beta: &DVector<f64>, metric: ErrorMetric) -> f64 {
    let d = beta - &sc.beta_star;
    match metric {
        ErrorMetric::Estimation => d.norm_squared() / d.len() as f64,
        ErrorMetric::Prediction => sc.x.mul(&d).norm_squared() / sc.x.nrows() as f64,
    }
}

/// Least squares on the nonzero true groups (minimum norm if rank deficient).
fn oracle_fit(sc: &Scenario) -> Result<DVector<f64>> {
    let active: Vec<&Vec<usize>> = sc
        .groups
        .iter()
        .enumerate()
        .filter(|(g, _)| sc.beta_tilde[*g] != 0.0)
        .map(|(_, l)| l)
        .collect();
    let mut beta = DVector::zeros(sc.beta_star.len());
    if active.is_empty() {
        return Ok(beta);
    }
    let xa = sc.x.aggregate(&active);
    let fit = ols(&xa, &sc.y)?;
    for (g, leaves) in active.iter().enumerate() {
        for &j in leaves.iter() {
            beta[j] = fit.beta[g];
        }
    }
    Ok(beta)
}

/// Best-over-grid error of every method on one scenario, as
/// `(method, error)` pairs in a fixed order.
pub fn evaluate_methods(
    sc: &Scenario,
    opts: &SweepOptions,
    methods: MethodSet,
    metric: ErrorMetric,
) -> Result<Vec<(&'static str, f64)>> {
    let solver = AdmmSolver::new(&sc.x, &sc.y, &sc.tree, false)?;
    let rho = opts.rho.unwrap_or_else(|| solver.design().scaled_rho());
    let base = FitConfig {
        rho,
        eps_abs: opts.eps_abs,
        eps_rel: opts.eps_rel,
        max_iter: opts.max_iter,
        ..FitConfig::default()
    };
    let grid = default_grid(solver.design(), opts.n_alpha, opts.n_lambda, opts.lambda_ratio);
    let fits = solver.fit_path(&grid, &base)?;
    let best = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let mut out = vec![("ours", best(&mut fits.iter().map(|f| error_of(sc, &f.beta, metric))))];

    if methods.oracle {
        out.push(("oracle", error_of(sc, &oracle_fit(sc)?, metric)));
    }
    let dense = sc.x.to_dense();
    if methods.ols {
        out.push(("ols", error_of(sc, &ols(&dense, &sc.y)?.beta, metric)));
    }
    if methods.lasso {
        let n = sc.y.len() as f64;
        let lmax = (dense.tr_mul(&sc.y).amax() / n).max(f64::MIN_POSITIVE);
        let w = vec![1.0; sc.x.ncols()];
        let lopts = LassoOptions {
            tol: 1e-7,
            ..LassoOptions::default()
        };
        let mut warm: Option<DVector<f64>> = None;
        let mut e = f64::INFINITY;
        for l in log_grid(lmax, opts.lambda_ratio, opts.n_lambda) {
            let fit = lasso_cd_weighted(&dense, &sc.y, l, &w, warm.as_ref(), lopts)?;
            e = e.min(error_of(sc, &fit.beta, metric));
            warm = Some(fit.beta);
        }
        out.push(("lasso", e));
    }
    if methods.ridge {
        // Penalties from the largest squared singular value over n down by 1e-6.
        let top = solver.design().squared_singular_values().max() / sc.y.len() as f64;
        let lambdas = log_grid(top.max(f64::MIN_POSITIVE), 1e-6, opts.n_lambda);
        let betas = ridge_svd(&dense, &sc.y, &lambdas)?;
        out.push(("ridge", best(&mut betas.iter().map(|b| error_of(sc, b, metric)))));
    }
    if methods.null {
        out.push(("null", error_of(sc, &DVector::zeros(sc.beta_star.len()), metric)));
    }
    Ok(out)
}

fn summarize(setting: f64, per_rep: Vec<Vec<(&'static str, f64)>>) -> Vec<TableRow> {
    let Some(first) = per_rep.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(m, &(name, _))| {
            let vals: Vec<f64> = per_rep.iter().map(|r| r[m].1).collect();
            let (mean_err, se) = mean_se(&vals);
            TableRow {
                setting,
                method: name.to_string(),
                mean_err,
                se,
            }
        })
        .collect()
}

fn run_replicates(
    spec: &ExperimentSpec,
    truth: Truth,
    opts: &SweepOptions,
    metric: ErrorMetric,
) -> Result<Vec<Vec<(&'static str, f64)>>> {
    let methods = opts.methods.unwrap_or(MethodSet::for_dims(spec.n, spec.p));
    (0..spec.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sc = gen_scenario(spec, r, truth)?;
            evaluate_methods(&sc, opts, methods, metric)
        })
        .collect()
}

/// Best-over-grid estimation error per `k` and method, averaged over
/// replicates.
pub fn run_scenario_sweep(base: &ExperimentSpec, k_values: &[usize], opts: &SweepOptions) -> Result<Vec<TableRow>> {
    for &k in k_values {
        base.with_k(k).validate()?;
    }
    let mut rows = Vec::new();
    for &k in k_values {
        let spec = base.with_k(k);
        let per_rep = run_replicates(&spec, Truth::TreeCut, opts, ErrorMetric::Estimation)?;
        rows.extend(summarize(k as f64, per_rep));
    }
    Ok(rows)
}

/// Best-over-grid prediction error of the tree estimator per latent spread
/// `tau`. The true groups stay the planted clusters while the tree is
/// rebuilt from the `tau`-spread latent vectors; replicate `r` uses the same
/// random numbers at every `tau`.
pub fn run_distortion_sweep(spec: &ExperimentSpec, tau_values: &[f64], opts: &SweepOptions) -> Result<Vec<TableRow>> {
    let methods = MethodSet {
        oracle: false,
        ols: false,
        lasso: false,
        ridge: false,
        null: false,
    };
    let opts = SweepOptions {
        methods: Some(opts.methods.unwrap_or(methods)),
        ..opts.clone()
    };
    for &tau in tau_values {
        ExperimentSpec { tau, ..spec.clone() }.validate()?;
    }
    if tau_values.is_empty() {
        return Err(Error::Config("no tau values".into()));
    }
    let mut rows = Vec::new();
    for &tau in tau_values {
        let s = ExperimentSpec { tau, ..spec.clone() };
        let per_rep = run_replicates(&s, Truth::Planted, &opts, ErrorMetric::Prediction)?;
        rows.extend(summarize(tau, per_rep));
    }
    Ok(rows)
}
