//! Consensus ADMM for the tree-aggregation problem.
//!
//! The problem is split into three copies of `beta` (loss, `l1` on `beta`,
//! consensus constraint) and two copies of `gamma` (`l1` on the non-root
//! entries, consensus constraint). Each copy has a closed-form update:
//!
//! * `beta1`: ridge-type solve `(X^T X + n rho I)^{-1}(X^T y + n rho beta - n v1)`
//!   through the compact SVD of `X`,
//! * `beta2`, `gamma1`: soft-thresholding,
//! * `(beta3, gamma2)`: projection onto `{beta = A gamma}`.
//!
//! The global iterates are plain averages of the copies and every dual takes
//! a step of size `rho`.

use crate::error::{Error, Result};
use crate::linop::{
    centering_projection, compact_svd, soft_threshold, CountDesign, TreeProjector,
};
use crate::tree::{AggregationMatrix, FeatureTree};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub intercept: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            alpha: 0.0,
            rho: 1.0,
            eps_abs: 1e-5,
            eps_rel: 1e-4,
            max_iter: 10_000,
            intercept: false,
        }
    }
}

impl FitConfig {
    pub fn new(lambda: f64, alpha: f64) -> Self {
        Self {
            lambda,
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        Ok(())
    }
}

/// Averaged iterates and duals; enough to resume the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub v: [DVector<f64>; 3],
    pub u: [DVector<f64>; 2],
}

impl AdmmState {
    fn zeros(p: usize, t: usize) -> Self {
        let zp = DVector::zeros(p);
        let zt = DVector::zeros(t);
        Self {
            beta: zp.clone(),
            gamma: zt.clone(),
            v: [zp.clone(), zp.clone(), zp],
            u: [zt.clone(), zt],
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// `A * gamma`, exactly on the constraint.
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// Iterate at exit, used for warm starts.
    pub state: AdmmState,
}

/// Tree-dependent pieces shared by every fit on the same tree.
#[derive(Debug)]
pub struct TreeOperators {
    pub tree: FeatureTree,
    pub a: AggregationMatrix,
    pub projector: TreeProjector,
    pub root: usize,
}

impl TreeOperators {
    pub fn new(tree: &FeatureTree) -> Result<Self> {
        let a = AggregationMatrix::from_tree(tree);
        let projector = TreeProjector::new(tree);
        Ok(Self {
            tree: tree.clone(),
            a,
            projector,
            root: tree.root(),
        })
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.a.ncols()
    }
}

/// Data-dependent precomputation for one `(X, y)`: centering, `X^T y` and
/// the compact SVD of the (centered) design.
#[derive(Debug, Clone)]
pub struct DesignOperators {
    x: CountDesign,
    y: DVector<f64>,
    intercept: bool,
    x_mean: DVector<f64>,
    y_mean: f64,
    xty: DVector<f64>,
    v: DMatrix<f64>,
    d2: DVector<f64>,
}

impl DesignOperators {
    pub fn new(x: &CountDesign, y: &DVector<f64>, intercept: bool) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if y.len() != n {
            return Err(Error::Dimension(format!("y has length {}, X has {} rows", y.len(), n)));
        }
        if n == 0 || p == 0 {
            return Err(Error::Dimension("empty design".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        let mut dense = x.to_dense();
        let (x_mean, y_mean, yc) = if intercept {
            let means = DVector::from_iterator(p, dense.column_iter().map(|c| c.mean()));
            for (j, mut col) in dense.column_iter_mut().enumerate() {
                col.add_scalar_mut(-means[j]);
            }
            (means, y.mean(), centering_projection(y))
        } else {
            (DVector::zeros(p), 0.0, y.clone())
        };
        let xty = dense.tr_mul(&yc);
        let svd = compact_svd(&dense)?;
        Ok(Self {
            x: x.clone(),
            y: y.clone(),
            intercept,
            x_mean,
            y_mean,
            xty,
            v: svd.v,
            d2: svd.d.map(|d| d * d),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Squared singular values of the (centered) design, descending.
    pub fn squared_singular_values(&self) -> &DVector<f64> {
        &self.d2
    }

    /// Penalty parameter scaled to the design: the mean of `d_i^2 / n` over
    /// all `p` directions (zero directions included), floored at `1e-8`.
    pub fn scaled_rho(&self) -> f64 {
        let s = self.d2.sum() / (self.n() as f64 * self.p() as f64);
        s.max(1e-8)
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    /// Residual `y - X beta` of the (centered, if enabled) problem.
    pub fn residual(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut r = &self.y - self.x.mul(beta);
        if self.intercept {
            let shift = self.y_mean - self.x_mean.dot(beta);
            r.add_scalar_mut(-shift);
        }
        r
    }

    /// `X^T r` of the (centered, if enabled) design.
    pub fn tr_mul(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut g = self.x.tr_mul(r);
        if self.intercept {
            g.axpy(-r.sum(), &self.x_mean, 1.0);
        }
        g
    }

    pub fn intercept_for(&self, beta: &DVector<f64>) -> f64 {
        if self.intercept {
            self.y_mean - self.x_mean.dot(beta)
        } else {
            0.0
        }
    }

    /// `out = (X^T X + n rho I)^{-1} r`, using `c` (length rank) as scratch.
    fn ridge_solve_into(&self, r: &DVector<f64>, n_rho: f64, out: &mut DVector<f64>, c: &mut DVector<f64>) {
        c.gemv_tr(1.0, &self.v, r, 0.0);
        for (ci, &d2) in c.iter_mut().zip(self.d2.iter()) {
            *ci *= 1.0 / (d2 + n_rho) - 1.0 / n_rho;
        }
        out.copy_from(r);
        out.gemv(1.0, &self.v, c, 1.0 / n_rho);
    }
}

/// Value of the penalized objective at `(beta, gamma)`. With an intercept
/// the loss is evaluated at the optimal intercept.
pub fn objective(
    ops: &DesignOperators,
    root: usize,
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
    lambda: f64,
    alpha: f64,
) -> f64 {
    let n = ops.n() as f64;
    let loss = ops.residual(beta).norm_squared() / (2.0 * n);
    let g1: f64 = gamma
        .iter()
        .enumerate()
        .filter(|&(u, _)| u != root)
        .map(|(_, g)| g.abs())
        .sum();
    loss + lambda * (alpha * g1 + (1.0 - alpha) * beta.lp_norm(1))
}

/// Reusable solver for one design and one tree.
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    tree_ops: Arc<TreeOperators>,
    design: Arc<DesignOperators>,
}

impl AdmmSolver {
    pub fn new(x: &CountDesign, y: &DVector<f64>, tree: &FeatureTree, intercept: bool) -> Result<Self> {
        if tree.leaf_count() != x.ncols() {
            return Err(Error::Dimension(format!(
                "tree has {} leaves, X has {} columns",
                tree.leaf_count(),
                x.ncols()
            )));
        }
        Ok(Self {
            tree_ops: Arc::new(TreeOperators::new(tree)?),
            design: Arc::new(DesignOperators::new(x, y, intercept)?),
        })
    }

    pub fn from_parts(tree_ops: Arc<TreeOperators>, design: Arc<DesignOperators>) -> Result<Self> {
        if tree_ops.p() != design.p() {
            return Err(Error::Dimension(format!(
                "tree has {} leaves, X has {} columns",
                tree_ops.p(),
                design.p()
            )));
        }
        Ok(Self { tree_ops, design })
    }

    pub fn tree_ops(&self) -> &Arc<TreeOperators> {
        &self.tree_ops
    }

    pub fn design(&self) -> &Arc<DesignOperators> {
        &self.design
    }

    pub fn objective(&self, beta: &DVector<f64>, gamma: &DVector<f64>, lambda: f64, alpha: f64) -> f64 {
        objective(&self.design, self.tree_ops.root, beta, gamma, lambda, alpha)
    }

    pub fn fit(&self, cfg: &FitConfig, warm: Option<&FitResult>) -> Result<FitResult> {
        cfg.validate()?;
        if cfg.intercept != self.design.intercept {
            return Err(Error::Config("intercept setting differs from the prepared design".into()));
        }
        let ops = &self.design;
        let tops = &self.tree_ops;
        let (n, p, t) = (ops.n() as f64, ops.p(), tops.node_count());
        let rho = cfg.rho;
        let n_rho = n * rho;
        let thr_beta = cfg.lambda * (1.0 - cfg.alpha) / rho;
        let thr_gamma = cfg.lambda * cfg.alpha / rho;
        let scale = ((3 * p + 2 * t) as f64).sqrt();

        let mut st = match warm {
            Some(w) if w.state.beta.len() == p && w.state.gamma.len() == t => w.state.clone(),
            Some(_) => return Err(Error::Dimension("warm start has wrong shape".into())),
            None => AdmmState::zeros(p, t),
        };

        let root = tops.root;
        let mut b = [DVector::zeros(p), DVector::zeros(p), DVector::zeros(p)];
        let mut g = [DVector::zeros(t), DVector::zeros(t)];
        let mut rhs = DVector::zeros(p);
        let mut c = DVector::zeros(ops.d2.len());
        let mut zb = DVector::zeros(p);
        let mut zg = DVector::zeros(t);
        let mut work = vec![0.0; 2 * t];
        let mut beta = DVector::zeros(p);
        let mut gamma = DVector::zeros(t);

        let mut iterations = 0;
        let mut converged = false;
        let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
        while iterations < cfg.max_iter {
            iterations += 1;
            rhs.copy_from(&ops.xty);
            rhs.axpy(n_rho, &st.beta, 1.0);
            rhs.axpy(-n, &st.v[0], 1.0);
            ops.ridge_solve_into(&rhs, n_rho, &mut b[0], &mut c);

            for j in 0..p {
                b[1][j] = soft_threshold(st.beta[j] - st.v[1][j] / rho, thr_beta);
                zb[j] = st.beta[j] - st.v[2][j] / rho;
            }
            for u in 0..t {
                let z = st.gamma[u] - st.u[0][u] / rho;
                g[0][u] = if u == root { z } else { soft_threshold(z, thr_gamma) };
                zg[u] = st.gamma[u] - st.u[1][u] / rho;
            }
            {
                let [_, _, b3] = &mut b;
                let [_, g2] = &mut g;
                tops.projector.project_into(
                    zb.as_slice(),
                    zg.as_slice(),
                    b3.as_mut_slice(),
                    g2.as_mut_slice(),
                    &mut work,
                );
            }

            let mut r2 = 0.0;
            let mut copies2 = 0.0;
            let mut db2 = 0.0;
            for j in 0..p {
                let m = (b[0][j] + b[1][j] + b[2][j]) / 3.0;
                beta[j] = m;
                for i in 0..3 {
                    let d = b[i][j] - m;
                    r2 += d * d;
                    copies2 += b[i][j] * b[i][j];
                    st.v[i][j] += rho * d;
                }
                let d = m - st.beta[j];
                db2 += d * d;
            }
            let mut dg2 = 0.0;
            for u in 0..t {
                let m = (g[0][u] + g[1][u]) / 2.0;
                gamma[u] = m;
                for i in 0..2 {
                    let d = g[i][u] - m;
                    r2 += d * d;
                    copies2 += g[i][u] * g[i][u];
                    st.u[i][u] += rho * d;
                }
                let d = m - st.gamma[u];
                dg2 += d * d;
            }
            #[cfg(debug_assertions)]
            {
                let vbar = (&st.v[0] + &st.v[1] + &st.v[2]).amax();
                let ubar = (&st.u[0] + &st.u[1]).amax();
                let vmax = st.v.iter().chain(st.u.iter()).map(|x| x.amax()).fold(1.0, f64::max);
                debug_assert!(
                    vbar.max(ubar) <= 1e-8 * vmax,
                    "averaged duals drifted from zero: {} {}",
                    vbar,
                    ubar
                );
            }
            r_norm = r2.sqrt();
            s_norm = rho * (3.0 * db2 + 2.0 * dg2).sqrt();
            let global2 = 3.0 * beta.norm_squared() + 2.0 * gamma.norm_squared();
            let dual2: f64 = st.v.iter().chain(st.u.iter()).map(|x| x.norm_squared()).sum();
            let eps_pri = cfg.eps_abs * scale + cfg.eps_rel * copies2.sqrt().max(global2.sqrt());
            let eps_dual = cfg.eps_abs * scale + cfg.eps_rel * dual2.sqrt();
            std::mem::swap(&mut st.beta, &mut beta);
            std::mem::swap(&mut st.gamma, &mut gamma);
            if !(r_norm.is_finite() && s_norm.is_finite()) {
                return Err(Error::NonFinite("ADMM iterates"));
            }
            if r_norm <= eps_pri && s_norm <= eps_dual {
                converged = true;
                break;
            }
        }

        let gamma = st.gamma.clone();
        let beta = tops.a.mul(&gamma);
        let objective = self.objective(&beta, &gamma, cfg.lambda, cfg.alpha);
        Ok(FitResult {
            intercept: ops.intercept_for(&beta),
            beta,
            gamma,
            iterations,
            converged,
            primal_residual: r_norm,
            dual_residual: s_norm,
            objective,
            lambda: cfg.lambda,
            alpha: cfg.alpha,
            state: st,
        })
    }

    /// Fits every `(lambda, alpha)` of `grid`, returned in grid order.
    ///
    /// Points sharing an `alpha` form a lane solved with decreasing `lambda`,
    /// each fit warm-started from the previous one. Lanes run on the current
    /// rayon pool.
    pub fn fit_path(&self, grid: &[(f64, f64)], base: &FitConfig) -> Result<Vec<FitResult>> {
        if grid.is_empty() {
            return Err(Error::Config("empty tuning grid".into()));
        }
        let mut lanes: Vec<(f64, Vec<usize>)> = Vec::new();
        for (i, &(_, a)) in grid.iter().enumerate() {
            match lanes.iter_mut().find(|(la, _)| la.to_bits() == a.to_bits()) {
                Some((_, idx)) => idx.push(i),
                None => lanes.push((a, vec![i])),
            }
        }
        for (_, idx) in lanes.iter_mut() {
            // Stable sort keeps duplicates in grid order.
            idx.sort_by(|&i, &j| grid[j].0.total_cmp(&grid[i].0));
        }
        let solved: Vec<Vec<(usize, FitResult)>> = lanes
            .par_iter()
            .map(|(_, idx)| {
                let mut prev: Option<FitResult> = None;
                let mut out = Vec::with_capacity(idx.len());
                for &i in idx {
                    let cfg = FitConfig {
                        lambda: grid[i].0,
                        alpha: grid[i].1,
                        ..base.clone()
                    };
                    let res = self.fit(&cfg, prev.as_ref())?;
                    prev = Some(res.clone());
                    out.push((i, res));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut slots: Vec<Option<FitResult>> = vec![None; grid.len()];
        for (i, r) in solved.into_iter().flatten() {
            slots[i] = Some(r);
        }
        Ok(slots.into_iter().map(|r| r.expect("every grid point solved")).collect())
    }
}

/// One-shot fit. Builds the operators, so prefer [`AdmmSolver`] for repeated
/// fits on the same data.
pub fn fit(
    x: &CountDesign,
    y: &DVector<f64>,
    tree: &FeatureTree,
    cfg: &FitConfig,
    warm: Option<&FitResult>,
) -> Result<FitResult> {
    AdmmSolver::new(x, y, tree, cfg.intercept)?.fit(cfg, warm)
}

/// Top of the default lambda path: the `alpha = 0` value `||X^T y||_inf / n`
/// divided by `1 - alpha` (floored at `1 / (p + 1)`). For `alpha > 0` this
/// bounds the exact value from above.
pub fn lambda_max(ops: &DesignOperators, alpha: f64) -> f64 {
    let p = ops.p() as f64;
    let zmax = ops.xty.amax() / ops.n() as f64;
    zmax / (1.0 - alpha).max(1.0 / (p + 1.0))
}

/// Whether `beta = 0` is optimal at `(lambda, alpha)`.
///
/// With `z = X^T y / n`, zero is optimal iff some `t` in `[-1, 1]^p` makes
/// `w = z - lambda (1 - alpha) t` sum to zero over all leaves and to at most
/// `lambda alpha` in absolute value over the leaves of every other node.
/// The attainable sums below a node form an interval, computed bottom-up.
fn zero_is_optimal(tree: &FeatureTree, z: &DVector<f64>, lambda: f64, alpha: f64) -> bool {
    let c = lambda * (1.0 - alpha);
    let b = lambda * alpha;
    let mut lo = vec![0.0; tree.node_count()];
    let mut hi = vec![0.0; tree.node_count()];
    for &u in tree.postorder() {
        if tree.is_leaf(u) {
            lo[u] = z[u] - c;
            hi[u] = z[u] + c;
        } else {
            let (l, h) = tree
                .children(u)
                .iter()
                .fold((0.0, 0.0), |(l, h), &v| (l + lo[v], h + hi[v]));
            lo[u] = l;
            hi[u] = h;
        }
        if u != tree.root() {
            lo[u] = lo[u].max(-b);
            hi[u] = hi[u].min(b);
            if lo[u] > hi[u] {
                return false;
            }
        }
    }
    let r = tree.root();
    lo[r] <= 0.0 && 0.0 <= hi[r]
}

/// Smallest `lambda` at which `beta = 0` solves the problem for this
/// `alpha`, found by bisection to relative precision `1e-12`.
pub fn lambda_max_exact(solver: &AdmmSolver, alpha: f64) -> f64 {
    let ops = solver.design();
    let tree = &solver.tree_ops().tree;
    let z = &ops.xty / ops.n() as f64;
    let mut hi = lambda_max(ops, alpha);
    if hi == 0.0 || !zero_is_optimal(tree, &z, hi, alpha) {
        return hi;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if zero_is_optimal(tree, &z, mid, alpha) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `n_alpha` equally spaced values of `alpha` in `[0, p / (p + 1)]`.
pub fn alpha_grid(p: usize, n_alpha: usize) -> Vec<f64> {
    let hi = p as f64 / (p as f64 + 1.0);
    match n_alpha {
        0 => Vec::new(),
        1 => vec![0.0],
        m => (0..m).map(|i| hi * i as f64 / (m - 1) as f64).collect(),
    }
}

/// `n` log-spaced values from `hi` down to `hi * ratio`.
pub fn log_grid(hi: f64, ratio: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        m => (0..m)
            .map(|i| hi * ratio.powf(i as f64 / (m - 1) as f64))
            .collect(),
    }
}

/// Default `alpha x lambda` grid: for every alpha, `n_lambda` log-spaced
/// values from that alpha's `lambda_max` down to `ratio * lambda_max(0)`.
/// The common floor keeps the weakest penalty comparable across alphas, since
/// `lambda_max(alpha)` grows like `1 / (1 - alpha)`.
pub fn default_grid(ops: &DesignOperators, n_alpha: usize, n_lambda: usize, ratio: f64) -> Vec<(f64, f64)> {
    let base = lambda_max(ops, 0.0);
    let base = if base > 0.0 { base } else { 1.0 };
    let mut grid = Vec::with_capacity(n_alpha * n_lambda);
    for a in alpha_grid(ops.p(), n_alpha) {
        let hi = lambda_max(ops, a).max(base);
        for l in log_grid(hi, ratio * base / hi, n_lambda) {
            grid.push((l, a));
        }
    }
    grid
}

/// Minimal Euclidean norm of an element of the subdifferential of the
/// `gamma`-form objective
/// `1/(2n) ||y - X A gamma||^2 + lambda alpha ||gamma_{-r}||_1 + lambda (1 - alpha) ||A gamma||_1`
/// at `gamma`. Entries of `gamma` and `A gamma` with magnitude at most
/// `zero_tol` are treated as zero, so their sign ranges over `[-1, 1]`.
pub fn kkt_residual_with_tol(
    solver: &AdmmSolver,
    gamma: &DVector<f64>,
    lambda: f64,
    alpha: f64,
    zero_tol: f64,
) -> f64 {
    let tops = solver.tree_ops();
    let ops = solver.design();
    let a = &tops.a;
    let beta = a.mul(gamma);
    let n = ops.n() as f64;
    let grad = -a.tr_mul(&ops.tr_mul(&ops.residual(&beta))) / n;
    let (la, lb) = (lambda * alpha, lambda * (1.0 - alpha));

    // w = grad + la * s + lb * A^T t, with s and t fixed where the sign is.
    let t_nodes = a.ncols();
    let mut s = DVector::zeros(t_nodes);
    let mut s_free = vec![false; t_nodes];
    for u in 0..t_nodes {
        if u == tops.root {
            continue;
        }
        if gamma[u].abs() > zero_tol {
            s[u] = gamma[u].signum();
        } else {
            s_free[u] = true;
        }
    }
    let p = a.nrows();
    let mut tv = DVector::zeros(p);
    let mut t_free = vec![false; p];
    for j in 0..p {
        if beta[j].abs() > zero_tol {
            tv[j] = beta[j].signum();
        } else {
            t_free[j] = true;
        }
    }
    // Nodes above each leaf, for updating A^T t when t_j moves.
    let mut above: Vec<Vec<usize>> = vec![Vec::new(); p];
    for k in 0..t_nodes {
        for &j in a.column(k) {
            above[j].push(k);
        }
    }
    let mut w = &grad + &s * la + a.tr_mul(&tv) * lb;
    if la > 0.0 || lb > 0.0 {
        for _sweep in 0..20_000 {
            let mut moved = 0.0f64;
            if la > 0.0 {
                for u in 0..t_nodes {
                    if !s_free[u] {
                        continue;
                    }
                    let target = (s[u] - w[u] / la).clamp(-1.0, 1.0);
                    let d = target - s[u];
                    if d != 0.0 {
                        s[u] = target;
                        w[u] += la * d;
                        moved = moved.max(d.abs());
                    }
                }
            }
            if lb > 0.0 {
                for j in 0..p {
                    if !t_free[j] {
                        continue;
                    }
                    let col = &above[j];
                    let sum_w: f64 = col.iter().map(|&k| w[k]).sum();
                    let target = (tv[j] - sum_w / (lb * col.len() as f64)).clamp(-1.0, 1.0);
                    let d = target - tv[j];
                    if d != 0.0 {
                        tv[j] = target;
                        for &k in col {
                            w[k] += lb * d;
                        }
                        moved = moved.max(d.abs());
                    }
                }
            }
            if moved < 1e-13 {
                break;
            }
        }
    }
    w.norm()
}

/// [`kkt_residual_with_tol`] with the zero threshold
/// `1e-6 * max(1, ||gamma||_inf)`.
pub fn kkt_residual(solver: &AdmmSolver, gamma: &DVector<f64>, lambda: f64, alpha: f64) -> f64 {
    let tol = 1e-6 * gamma.amax().max(1.0);
    kkt_residual_with_tol(solver, gamma, lambda, alpha, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use crate::tree::{BuildOptions, ParentEntry};

    fn toy() -> (CountDesign, DVector<f64>, FeatureTree) {
        let x = DMatrix::from_fn(12, 4, |i, j| ((i * 3 + j * 5) % 4) as f64);
        let tree = FeatureTree::build_from_parent_list(
            &[(1, Some(5)), (2, Some(5)), (3, Some(6)), (4, Some(6)), (5, Some(7)), (6, Some(7)), (7, None)],
            Default::default(),
        )
        .unwrap();
        let y = DVector::from_fn(12, |i, _| (i as f64 * 0.7).sin() + 1.0);
        (CountDesign::from_dense(x).unwrap(), y, tree)
    }

    #[test]
    fn zero_response_gives_zero_fit() {
        let (x, _, tree) = toy();
        let y = DVector::zeros(12);
        let r = fit(&x, &y, &tree, &FitConfig::new(0.3, 0.5), None).unwrap();
        assert!(r.converged);
        assert_eq!(r.beta.amax(), 0.0);
        assert_eq!(r.gamma.amax(), 0.0);
    }

    #[test]
    fn unpenalized_star_matches_least_squares() {
        let (x, y, _) = toy();
        let tree = FeatureTree::star(4).unwrap();
        let cfg = FitConfig {
            eps_abs: 1e-10,
            eps_rel: 1e-10,
            max_iter: 100_000,
            ..FitConfig::new(0.0, 0.5)
        };
        let r = fit(&x, &y, &tree, &cfg, None).unwrap();
        let xd = x.to_dense();
        let ols = (xd.transpose() * &xd).cholesky().unwrap().solve(&xd.tr_mul(&y));
        assert!((r.beta - ols).amax() < 1e-4);
    }

    #[test]
    fn objective_formula() {
        let (x, y, tree) = toy();
        let s = AdmmSolver::new(&x, &y, &tree, false).unwrap();
        let z = DVector::zeros(7);
        let o = s.objective(&DVector::zeros(4), &z, 2.0, 0.5);
        assert!((o - y.norm_squared() / 24.0).abs() < 1e-15);
        let g = dvector![0.1, -0.2, 0.0, 0.3, 0.5, -0.1, 0.25];
        let b = AggregationMatrix::from_tree(&tree).mul(&g);
        let expect = (&y - x.to_dense() * &b).norm_squared() / 24.0
            + 0.4 * (0.3 * (0.1 + 0.2 + 0.3 + 0.5 + 0.1) + 0.7 * b.lp_norm(1));
        assert!((s.objective(&b, &g, 0.4, 0.3) - expect).abs() < 1e-14);
    }

    #[test]
    fn large_lambda_zero_is_optimal() {
        let (x, y, tree) = toy();
        let s = AdmmSolver::new(&x, &y, &tree, true).unwrap();
        assert!(kkt_residual(&s, &DVector::zeros(7), 1e6, 0.5) < 1e-12);
    }

    #[test]
    fn intercept_residual_has_zero_mean() {
        let (x, mut y, tree) = toy();
        y.add_scalar_mut(10.0);
        let cfg = FitConfig {
            intercept: true,
            ..FitConfig::new(0.05, 0.5)
        };
        let r = fit(&x, &y, &tree, &cfg, None).unwrap();
        let resid = &y - x.to_dense() * &r.beta;
        assert!((resid.mean() - r.intercept).abs() < 1e-8);
    }

    #[test]
    fn grids() {
        assert_eq!(alpha_grid(3, 4), vec![0.0, 0.25, 0.5, 0.75]);
        let g = log_grid(1.0, 1e-2, 3);
        assert!((g[1] - 0.1).abs() < 1e-15 && (g[2] - 0.01).abs() < 1e-15);
        let x = CountDesign::from_dense(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        let tree = FeatureTree::star(2).unwrap();
        let solver = AdmmSolver::new(&x, &DVector::from_vec(vec![2.0, 2.0]), &tree, false).unwrap();
        // z = X^T y / n = (1, 2).
        let g = default_grid(solver.design(), 2, 3, 1e-2);
        assert_eq!(g.len(), 6);
        assert!((g[0].0 - 2.0).abs() < 1e-12 && (g[2].0 - 0.02).abs() < 1e-12);
        assert!((g[3].0 - 6.0).abs() < 1e-12 && (g[5].0 - 0.02).abs() < 1e-12);
        assert!((g[3].1 - 2.0 / 3.0).abs() < 1e-15);
        // At alpha = 0 zero is optimal iff lambda >= 2. At alpha = 2/3 only
        // the common level is penalized at the root, by (1 - alpha) lambda 2|c|,
        // so lambda >= 3 / (2/3) = 4.5; the leaves need lambda >= 2 alone.
        assert!((lambda_max_exact(&solver, 0.0) - 2.0).abs() < 1e-10);
        assert!((lambda_max_exact(&solver, 2.0 / 3.0) - 4.5).abs() < 1e-10);
    }

    #[test]
    fn lambda_max_is_tight() {
        let x = CountDesign::from_dense(DMatrix::from_fn(12, 6, |i, j| ((i * 7 + j * 3) % 5) as f64)).unwrap();
        let y = DVector::from_fn(12, |i, _| (i as f64 * 0.37).sin() + 0.5);
        let tree = FeatureTree::from_parent_list(
            &[
                ParentEntry::new(1, Some(7)),
                ParentEntry::new(2, Some(7)),
                ParentEntry::new(3, Some(8)),
                ParentEntry::new(4, Some(8)),
                ParentEntry::new(5, Some(9)),
                ParentEntry::new(6, Some(9)),
                ParentEntry::new(7, Some(10)),
                ParentEntry::new(8, Some(10)),
                ParentEntry::new(9, None),
                ParentEntry::new(10, Some(9)),
            ],
            BuildOptions::default(),
        )
        .unwrap();
        let solver = AdmmSolver::new(&x, &y, &tree, false).unwrap();
        for alpha in [0.0, 0.3, 0.8] {
            let lm = lambda_max_exact(&solver, alpha);
            let zero = DVector::zeros(tree.node_count());
            assert!(kkt_residual(&solver, &zero, lm * (1.0 + 1e-9), alpha) < 1e-7);
            assert!(kkt_residual(&solver, &zero, lm * 0.99, alpha) > 1e-5);
        }
    }
}
