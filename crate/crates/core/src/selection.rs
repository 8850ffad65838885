//! K-fold cross-validation, prediction, error metrics and the ridge
//! baseline.

use crate::admm::{AdmmSolver, DesignOperators, FitConfig, FitResult, TreeOperators};
use crate::baselines::signed_support;
use crate::error::{Error, Result};
use crate::linop::{compact_svd, CountDesign};
use crate::tree::FeatureTree;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct CvResult {
    pub grid: Vec<(f64, f64)>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub best_index: usize,
    /// Fold id of every sample.
    pub fold_assignments: Vec<usize>,
}

impl CvResult {
    /// Index chosen by the one-standard-error rule: the largest `lambda`
    /// (then smallest `alpha`) whose mean error is within one standard error
    /// of the minimum.
    pub fn one_se_index(&self) -> usize {
        let cut = self.cv_mean[self.best_index] + self.cv_se[self.best_index];
        let eligible: Vec<usize> = (0..self.grid.len()).filter(|&i| self.cv_mean[i] <= cut).collect();
        pick_by_ties(&self.grid, &eligible)
    }

    pub fn best(&self) -> (f64, f64) {
        self.grid[self.best_index]
    }
}

/// Among `candidates`, the largest `lambda`, then the smallest `alpha`, then
/// the first grid position.
fn pick_by_ties(grid: &[(f64, f64)], candidates: &[usize]) -> usize {
    *candidates
        .iter()
        .min_by(|&&i, &&j| {
            grid[j]
                .0
                .total_cmp(&grid[i].0)
                .then(grid[i].1.total_cmp(&grid[j].1))
                .then(i.cmp(&j))
        })
        .expect("at least one candidate")
}

/// Seeded shuffle of `0..n` cut into `k` contiguous blocks; the first
/// `n % k` folds get one extra sample.
pub fn fold_assignments(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    if k > n {
        return Err(Error::Config(format!("{} folds for {} samples", k, n)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &order[pos..pos + size] {
            folds[i] = f;
        }
        pos += size;
    }
    Ok(folds)
}

/// K-fold cross-validation of the tree estimator over `grid`.
#[allow(clippy::too_many_arguments)]
pub fn kfold_cv(
    x: &CountDesign,
    y: &DVector<f64>,
    tree: &FeatureTree,
    grid: &[(f64, f64)],
    k: usize,
    seed: u64,
    clip: Option<(f64, f64)>,
    base: &FitConfig,
) -> Result<CvResult> {
    let folds = fold_assignments(x.nrows(), k, seed)?;
    kfold_cv_with_folds(x, y, tree, grid, &folds, clip, base)
}

/// Cross-validation with explicit fold ids `0..K`.
pub fn kfold_cv_with_folds(
    x: &CountDesign,
    y: &DVector<f64>,
    tree: &FeatureTree,
    grid: &[(f64, f64)],
    folds: &[usize],
    clip: Option<(f64, f64)>,
    base: &FitConfig,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty tuning grid".into()));
    }
    let n = x.nrows();
    if folds.len() != n || y.len() != n {
        return Err(Error::Dimension("fold ids, X and y must have one entry per sample".into()));
    }
    let k = folds.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    if tree.leaf_count() != x.ncols() {
        return Err(Error::Dimension("tree leaves differ from columns of X".into()));
    }
    let tree_ops = Arc::new(TreeOperators::new(tree)?);
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            if test.is_empty() {
                return Err(Error::Config(format!("fold {} is empty", f)));
            }
            let xt = x.row_subset(&train);
            let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
            let design = Arc::new(DesignOperators::new(&xt, &yt, base.intercept)?);
            let solver = AdmmSolver::from_parts(tree_ops.clone(), design)?;
            let fits = solver.fit_path(grid, base)?;
            let xv = x.row_subset(&test);
            let yv = DVector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
            fits.iter()
                .map(|r| {
                    let pred = predict(&xv, r, clip)?;
                    Ok((pred - &yv).norm_squared() / test.len() as f64)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let kf = k as f64;
    let mut cv_mean = Vec::with_capacity(grid.len());
    let mut cv_se = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let vals: Vec<f64> = per_fold.iter().map(|v| v[g]).collect();
        let m = vals.iter().sum::<f64>() / kf;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (kf - 1.0);
        cv_mean.push(m);
        cv_se.push((var / kf).sqrt());
    }
    if cv_mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cross-validation error"));
    }
    let min = cv_mean.iter().cloned().fold(f64::INFINITY, f64::min);
    let at_min: Vec<usize> = (0..grid.len()).filter(|&i| cv_mean[i] == min).collect();
    Ok(CvResult {
        grid: grid.to_vec(),
        best_index: pick_by_ties(grid, &at_min),
        cv_mean,
        cv_se,
        fold_assignments: folds.to_vec(),
    })
}

/// `intercept + X beta`, optionally clipped to `[lo, hi]`.
pub fn predict(x: &CountDesign, fit: &FitResult, clip: Option<(f64, f64)>) -> Result<DVector<f64>> {
    if x.ncols() != fit.beta.len() {
        return Err(Error::Dimension(format!(
            "design has {} columns, fit has {} coefficients",
            x.ncols(),
            fit.beta.len()
        )));
    }
    let mut pred = x.mul(&fit.beta).add_scalar(fit.intercept);
    if let Some((lo, hi)) = clip {
        pred.apply(|v| *v = v.clamp(lo, hi));
    }
    Ok(pred)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `||beta_hat - beta*||^2 / p`.
    pub estimation_error: f64,
    /// `||X beta_hat - X beta*||^2 / n`.
    pub prediction_error: f64,
    /// Signed supports agree, with entries `|b| <= zero_tol` counted as 0.
    pub support_recovered: bool,
}

pub fn metrics(
    beta_hat: &DVector<f64>,
    beta_star: &DVector<f64>,
    x: &CountDesign,
    zero_tol: f64,
) -> Metrics {
    assert_eq!(beta_hat.len(), beta_star.len(), "coefficient lengths");
    let diff = beta_hat - beta_star;
    let snap = |b: &DVector<f64>| b.map(|v| if v.abs() <= zero_tol { 0.0 } else { v });
    Metrics {
        estimation_error: diff.norm_squared() / beta_hat.len() as f64,
        prediction_error: x.mul(&diff).norm_squared() / x.nrows() as f64,
        support_recovered: signed_support(&snap(beta_hat)) == signed_support(&snap(beta_star)),
    }
}

/// Ridge `(X^T X + n lambda I)^{-1} X^T y` for every `lambda`, sharing one SVD.
pub fn ridge_svd(x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64]) -> Result<Vec<DVector<f64>>> {
    if y.len() != x.nrows() {
        return Err(Error::Dimension("y length differs from rows of X".into()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Config("ridge penalties must be positive".into()));
    }
    let n = x.nrows() as f64;
    let svd = compact_svd(x)?;
    let uty = svd.u.tr_mul(y);
    Ok(lambdas
        .iter()
        .map(|&l| {
            let c = DVector::from_iterator(
                svd.rank(),
                (0..svd.rank()).map(|i| svd.d[i] * uty[i] / (svd.d[i] * svd.d[i] + n * l)),
            );
            &svd.v * c
        })
        .collect())
}
