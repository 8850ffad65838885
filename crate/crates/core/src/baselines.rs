//! Reference estimators: coordinate-descent lasso, least squares, oracle
//! least squares on the true aggregation, and the closed forms available for
//! the block-identity design.

use crate::error::{Error, Result};
use crate::linop::{compact_svd, soft_threshold, CountDesign};
use crate::tree::{AggregatingSet, FeatureTree};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    /// Largest violation of the optimality conditions at exit.
    pub kkt: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    pub intercept: bool,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            intercept: false,
            tol: 1e-8,
            max_sweeps: 1_000_000,
        }
    }
}

/// Lasso `1/(2n) ||y - X beta||^2 + lambda ||beta||_1` by cyclic coordinate
/// descent.
pub fn lasso_cd(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, intercept: bool) -> Result<LassoFit> {
    let w = vec![1.0; x.ncols()];
    lasso_cd_weighted(
        x,
        y,
        lambda,
        &w,
        None,
        LassoOptions {
            intercept,
            ..LassoOptions::default()
        },
    )
}

/// Lasso with per-coordinate penalty weights (`lambda * w_j |beta_j|`); a
/// zero weight leaves that coefficient unpenalized.
///
/// Sweeps run until the largest scaled coordinate change drops below
/// `tol / 10` and the subgradient optimality violation is at most `tol`.
pub fn lasso_cd_weighted(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    weights: &[f64],
    warm: Option<&DVector<f64>>,
    opts: LassoOptions,
) -> Result<LassoFit> {
    let (n, p) = x.shape();
    if y.len() != n || weights.len() != p {
        return Err(Error::Dimension("lasso inputs disagree in size".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso data"));
    }
    if !(lambda >= 0.0) || weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Config("lambda and weights must be nonnegative".into()));
    }
    let nf = n as f64;
    let mut xc = x.clone();
    let mut yc = y.clone();
    let (x_mean, y_mean) = if opts.intercept {
        let m = DVector::from_iterator(p, x.column_iter().map(|c| c.mean()));
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-m[j]);
        }
        let ym = y.mean();
        yc.add_scalar_mut(-ym);
        (m, ym)
    } else {
        (DVector::zeros(p), 0.0)
    };
    let sq: Vec<f64> = xc.column_iter().map(|c| c.norm_squared() / nf).collect();
    let mut beta = match warm {
        Some(b) if b.len() == p => b.clone(),
        _ => DVector::zeros(p),
    };
    let mut r = &yc - &xc * &beta;
    let mut sweeps = 0;
    let mut kkt = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            if sq[j] == 0.0 {
                continue;
            }
            let col = xc.column(j);
            let old = beta[j];
            let z = col.dot(&r) / nf + sq[j] * old;
            let new = soft_threshold(z, lambda * weights[j]) / sq[j];
            if new != old {
                r.axpy(old - new, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max((new - old).abs() * sq[j].sqrt());
            }
        }
        if max_change < opts.tol / 10.0 {
            kkt = lasso_kkt(&xc, &r, &beta, lambda, weights);
            if kkt <= opts.tol {
                break;
            }
        }
    }
    if kkt.is_infinite() {
        kkt = lasso_kkt(&xc, &r, &beta, lambda, weights);
    }
    Ok(LassoFit {
        intercept: if opts.intercept { y_mean - x_mean.dot(&beta) } else { 0.0 },
        beta,
        sweeps,
        kkt,
    })
}

/// Largest subgradient violation of the weighted lasso at `beta`, given the
/// residual `r = y - X beta`.
fn lasso_kkt(x: &DMatrix<f64>, r: &DVector<f64>, beta: &DVector<f64>, lambda: f64, w: &[f64]) -> f64 {
    let n = x.nrows() as f64;
    let g = x.tr_mul(r) / n;
    (0..x.ncols())
        .map(|j| {
            let pen = lambda * w[j];
            if beta[j] != 0.0 {
                (g[j] - pen * beta[j].signum()).abs()
            } else {
                (g[j].abs() - pen).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the lasso optimality conditions for `beta` on
/// `(x, y)` without intercept.
pub fn lasso_kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * beta;
    lasso_kkt(x, &r, beta, lambda, &vec![1.0; x.ncols()])
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub rank: usize,
    /// False when `X` has deficient column rank and `beta` is the
    /// minimum-norm solution.
    pub full_rank: bool,
}

/// Least squares through the compact SVD.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    if y.len() != x.nrows() {
        return Err(Error::Dimension("y length differs from rows of X".into()));
    }
    let svd = compact_svd(x)?;
    let uty = svd.u.tr_mul(y);
    let coef = uty.component_div(&svd.d);
    Ok(OlsFit {
        beta: &svd.v * coef,
        rank: svd.rank(),
        full_rank: svd.rank() == x.ncols(),
    })
}

/// Least squares on the aggregated columns `X A_{active}` for
/// `active ⊆ B*`, broadcast back to the leaves (zero outside `active`).
pub fn oracle_ls(
    x: &CountDesign,
    tree: &FeatureTree,
    y: &DVector<f64>,
    b_star: &AggregatingSet,
    active: &[usize],
) -> Result<DVector<f64>> {
    for u in active {
        if !b_star.contains(*u) {
            return Err(Error::Config(format!("node {} is not in the aggregating set", u)));
        }
    }
    let groups: Vec<&[usize]> = active.iter().map(|&u| tree.leaves_under(u)).collect();
    let xa = x.aggregate(&groups);
    let fit = ols(&xa, y)?;
    if !fit.full_rank {
        return Err(Error::SingularDesign {
            rank: fit.rank,
            cols: active.len(),
        });
    }
    let mut beta = DVector::zeros(tree.leaf_count());
    for (g, &u) in active.iter().enumerate() {
        for &j in tree.leaves_under(u) {
            beta[j] = fit.beta[g];
        }
    }
    Ok(beta)
}

/// Block structure of the identity design: `n` features in `k` consecutive
/// blocks of size `n / k`; the last block carries a zero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    k: usize,
    n: usize,
    beta_tilde: DVector<f64>,
}

impl BlockSpec {
    pub fn new(k: usize, n: usize, beta_tilde: DVector<f64>) -> Result<Self> {
        if k == 0 || n % k != 0 {
            return Err(Error::Config(format!("n = {} is not divisible by k = {}", n, k)));
        }
        if beta_tilde.len() != k {
            return Err(Error::Dimension(format!("beta_tilde has length {}, expected {}", beta_tilde.len(), k)));
        }
        if beta_tilde[k - 1] != 0.0 {
            return Err(Error::Config("last block coefficient must be zero".into()));
        }
        Ok(Self { k, n, beta_tilde })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.n / self.k
    }

    pub fn beta_tilde(&self) -> &DVector<f64> {
        &self.beta_tilde
    }

    /// `beta* = beta_tilde ⊗ 1_{n/k}`.
    pub fn beta_star(&self) -> DVector<f64> {
        self.broadcast(&self.beta_tilde)
    }

    pub fn broadcast(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = self.block_size();
        DVector::from_fn(self.n, |l, _| b[l / m])
    }

    /// Aggregated design `I_k ⊗ 1_{n/k}`.
    pub fn design(&self) -> DMatrix<f64> {
        let m = self.block_size();
        DMatrix::from_fn(self.n, self.k, |l, j| if l / m == j { 1.0 } else { 0.0 })
    }

    /// `(k/n) X~^T y`: the block means of `y`.
    pub fn block_means(&self, y: &DVector<f64>) -> DVector<f64> {
        let m = self.block_size();
        DVector::from_fn(self.k, |j, _| y.rows(j * m, m).sum() / m as f64)
    }
}

/// Oracle lasso on the aggregated identity design, broadcast to length `n`:
/// `S((k/n) X~^T y, lambda k) ⊗ 1_{n/k}`.
pub fn oracle_lasso_identity(y: &DVector<f64>, spec: &BlockSpec, lambda: f64) -> DVector<f64> {
    assert_eq!(y.len(), spec.n, "y length");
    let thr = lambda * spec.k as f64;
    let b = spec.block_means(y).map(|m| soft_threshold(m, thr));
    spec.broadcast(&b)
}

/// `S(y, lambda)`. The lasso on `X = I_n` with the `1/(2n)` loss is this map
/// at threshold `n * lambda`.
pub fn lasso_identity(y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    y.map(|v| soft_threshold(v, lambda))
}

/// Sign pattern with `sign(0) = 0`.
pub fn signed_support(beta: &DVector<f64>) -> Vec<i8> {
    beta.iter()
        .map(|&b| {
            if b > 0.0 {
                1
            } else if b < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Whether some threshold `lambda >= 0` makes `S(y, lambda)` recover the
/// signed support of `beta_star`.
///
/// The nonzero set of `S(y, lambda)` is `{l : |y_l| > lambda}`, so a
/// threshold exists iff `min |y|` over the signal exceeds `max |y|` over the
/// nulls, and every signal `y_l` has the sign of `beta*_l` (soft-thresholding
/// keeps signs).
pub fn lasso_identity_recovers(y: &DVector<f64>, beta_star: &DVector<f64>) -> bool {
    let mut min_signal = f64::INFINITY;
    let mut max_null = 0.0f64;
    for (&v, &b) in y.iter().zip(beta_star.iter()) {
        if b == 0.0 {
            max_null = max_null.max(v.abs());
        } else {
            if v.signum() != b.signum() || v == 0.0 {
                return false;
            }
            min_signal = min_signal.min(v.abs());
        }
    }
    min_signal > max_null
}

/// The necessary condition `min_signal |y| > max_null |y|`, ignoring signs.
pub fn lasso_identity_separates(y: &DVector<f64>, beta_star: &DVector<f64>) -> bool {
    let mut min_signal = f64::INFINITY;
    let mut max_null = 0.0f64;
    for (&v, &b) in y.iter().zip(beta_star.iter()) {
        if b == 0.0 {
            max_null = max_null.max(v.abs());
        } else {
            min_signal = min_signal.min(v.abs());
        }
    }
    min_signal > max_null
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn orthogonal_lasso_is_soft_threshold() {
        // X = sqrt(n) I_n has X^T X / n = I.
        let n = 5;
        let x = DMatrix::identity(n, n) * (n as f64).sqrt();
        let y = dvector![3.0, -0.2, 1.0, -4.0, 0.5];
        let fit = lasso_cd(&x, &y, 0.3, false).unwrap();
        let z = x.tr_mul(&y) / n as f64;
        assert!((fit.beta - z.map(|v| soft_threshold(v, 0.3))).amax() < 1e-12);
    }

    #[test]
    fn lambda_above_max_gives_zero() {
        let x = DMatrix::from_fn(8, 3, |i, j| ((i + 2 * j) % 3) as f64);
        let y = DVector::from_fn(8, |i, _| i as f64 - 3.0);
        let lmax = x.tr_mul(&y).amax() / 8.0;
        assert_eq!(lasso_cd(&x, &y, lmax, false).unwrap().beta.amax(), 0.0);
    }

    #[test]
    fn ols_identity_and_exact() {
        let y = dvector![1.0, -2.0, 3.5];
        assert!((ols(&DMatrix::identity(3, 3), &y).unwrap().beta - &y).amax() < 1e-14);
        let x = DMatrix::from_fn(10, 3, |i, j| ((i * (j + 2)) % 5) as f64 + (j == 0) as u8 as f64);
        let b = dvector![0.5, -1.0, 2.0];
        let fit = ols(&x, &(&x * &b)).unwrap();
        assert!(fit.full_rank);
        assert!((fit.beta - b).amax() < 1e-10);
    }

    #[test]
    fn ols_rank_deficient_flagged() {
        let x = DMatrix::from_fn(6, 3, |i, j| [1.0, i as f64, 1.0 + i as f64][j]);
        let fit = ols(&x, &DVector::from_element(6, 1.0)).unwrap();
        assert!(!fit.full_rank);
        assert_eq!(fit.rank, 2);
    }

    #[test]
    fn block_spec_validation() {
        assert!(BlockSpec::new(3, 10, dvector![1.0, 2.0, 0.0]).is_err());
        assert!(BlockSpec::new(2, 10, dvector![1.0, 2.0]).is_err());
        let s = BlockSpec::new(2, 4, dvector![1.5, 0.0]).unwrap();
        assert_eq!(s.beta_star(), dvector![1.5, 1.5, 0.0, 0.0]);
    }

    #[test]
    fn oracle_noiseless_and_shrunk() {
        let s = BlockSpec::new(3, 9, dvector![1.0, -2.0, 0.0]).unwrap();
        let y = s.beta_star();
        assert_eq!(oracle_lasso_identity(&y, &s, 0.0), y);
        assert_eq!(oracle_lasso_identity(&y, &s, 1.0).amax(), 0.0);
    }

    #[test]
    fn identity_lasso_extremes() {
        let y = dvector![0.5, -2.0, 1.0];
        assert_eq!(lasso_identity(&y, 0.0), y);
        assert_eq!(lasso_identity(&y, 2.0).amax(), 0.0);
    }

    #[test]
    fn recovery_criterion() {
        let b = dvector![1.0, -1.0, 0.0, 0.0];
        assert!(lasso_identity_recovers(&dvector![0.9, -0.8, 0.1, -0.5], &b));
        assert!(!lasso_identity_recovers(&dvector![0.9, 0.8, 0.1, -0.5], &b));
        assert!(lasso_identity_separates(&dvector![0.9, 0.8, 0.1, -0.5], &b));
        assert!(!lasso_identity_recovers(&dvector![0.4, -0.8, 0.1, -0.5], &b));
        assert_eq!(signed_support(&dvector![0.0, -0.1, 2.0]), vec![0, -1, 1]);
    }
}
