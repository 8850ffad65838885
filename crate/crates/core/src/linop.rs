//! Numerical kernels: count designs, soft-thresholding, compact SVD,
//! centering and the projector onto `{(beta, gamma) : beta = A gamma}`.

use crate::error::{Error, Result};
use crate::tree::AggregationMatrix;
use nalgebra::{DMatrix, DVector};

/// Column-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, v) in &sorted {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension(format!(
                    "entry ({}, {}) outside a {}x{} matrix",
                    r, c, nrows, ncols
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("design entries"));
            }
        }
        sorted.sort_by_key(|&(r, c, _)| (c, r));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            rowidx.push(r);
            values.push(v);
            colptr[c + 1] += 1;
            last = Some((r, c));
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        let mut m = Self {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        };
        m.prune_zeros();
        Ok(m)
    }

    pub fn from_dense(x: &DMatrix<f64>) -> Self {
        let mut colptr = Vec::with_capacity(x.ncols() + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for c in 0..x.ncols() {
            for r in 0..x.nrows() {
                let v = x[(r, c)];
                if v != 0.0 {
                    rowidx.push(r);
                    values.push(v);
                }
            }
            colptr.push(rowidx.len());
        }
        Self {
            nrows: x.nrows(),
            ncols: x.ncols(),
            colptr,
            rowidx,
            values,
        }
    }

    fn prune_zeros(&mut self) {
        let mut colptr = vec![0usize; self.ncols + 1];
        let mut k = 0;
        for c in 0..self.ncols {
            for i in self.colptr[c]..self.colptr[c + 1] {
                if self.values[i] != 0.0 {
                    self.rowidx[k] = self.rowidx[i];
                    self.values[k] = self.values[i];
                    k += 1;
                }
            }
            colptr[c + 1] = k;
        }
        self.rowidx.truncate(k);
        self.values.truncate(k);
        self.colptr = colptr;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `c`.
    pub fn column(&self, c: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.colptr[c], self.colptr[c + 1]);
        (&self.rowidx[a..b], &self.values[a..b])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.nrows, self.ncols);
        for c in 0..self.ncols {
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                x[(r, c)] = v;
            }
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(DMatrix<f64>),
    Sparse(CscMatrix),
}

/// Nonnegative `n x p` count matrix, stored densely or column-compressed.
///
/// `scale_factor` records a global rescaling applied after construction
/// (see [`normalize_for_theory`]); stored values already include it.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDesign {
    storage: Storage,
    scale_factor: f64,
}

fn check_entries<'a>(values: impl Iterator<Item = (usize, usize, &'a f64)>) -> Result<()> {
    for (r, c, &v) in values {
        if !v.is_finite() {
            return Err(Error::NonFinite("design entries"));
        }
        if v < 0.0 {
            return Err(Error::NegativeCount { row: r, col: c });
        }
    }
    Ok(())
}

impl CountDesign {
    pub fn from_dense(x: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        check_entries(x.iter().enumerate().map(|(i, v)| (i % n, i / n, v)))?;
        Ok(Self {
            storage: Storage::Dense(x),
            scale_factor: 1.0,
        })
    }

    pub fn from_sparse(x: CscMatrix) -> Result<Self> {
        for c in 0..x.ncols() {
            let (rows, vals) = x.column(c);
            check_entries(rows.iter().zip(vals).map(|(&r, v)| (r, c, v)))?;
        }
        Ok(Self {
            storage: Storage::Sparse(x),
            scale_factor: 1.0,
        })
    }

    pub fn nrows(&self) -> usize {
        match &self.storage {
            Storage::Dense(x) => x.nrows(),
            Storage::Sparse(x) => x.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match &self.storage {
            Storage::Dense(x) => x.ncols(),
            Storage::Sparse(x) => x.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    /// Fraction of nonzero entries.
    pub fn density(&self) -> f64 {
        let nnz = match &self.storage {
            Storage::Dense(x) => x.iter().filter(|&&v| v != 0.0).count(),
            Storage::Sparse(x) => x.nnz(),
        };
        nnz as f64 / (self.nrows() * self.ncols()).max(1) as f64
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(x) => x.clone(),
            Storage::Sparse(x) => x.to_dense(),
        }
    }

    /// Calls `f(row, value)` for the stored entries of column `c`.
    pub fn for_each_in_column(&self, c: usize, mut f: impl FnMut(usize, f64)) {
        match &self.storage {
            Storage::Dense(x) => {
                for (r, &v) in x.column(c).iter().enumerate() {
                    if v != 0.0 {
                        f(r, v);
                    }
                }
            }
            Storage::Sparse(x) => {
                let (rows, vals) = x.column(c);
                for (&r, &v) in rows.iter().zip(vals) {
                    f(r, v);
                }
            }
        }
    }

    /// `X * beta`.
    pub fn mul(&self, beta: &DVector<f64>) -> DVector<f64> {
        assert_eq!(beta.len(), self.ncols(), "beta length");
        match &self.storage {
            Storage::Dense(x) => x * beta,
            Storage::Sparse(_) => {
                let mut out = DVector::zeros(self.nrows());
                for (c, &b) in beta.iter().enumerate() {
                    if b != 0.0 {
                        self.for_each_in_column(c, |r, v| out[r] += v * b);
                    }
                }
                out
            }
        }
    }

    /// `X^T * r`.
    pub fn tr_mul(&self, r: &DVector<f64>) -> DVector<f64> {
        assert_eq!(r.len(), self.nrows(), "vector length");
        match &self.storage {
            Storage::Dense(x) => x.tr_mul(r),
            Storage::Sparse(_) => DVector::from_iterator(
                self.ncols(),
                (0..self.ncols()).map(|c| {
                    let mut s = 0.0;
                    self.for_each_in_column(c, |i, v| s += v * r[i]);
                    s
                }),
            ),
        }
    }

    /// `X 1_p`.
    pub fn row_sums(&self) -> DVector<f64> {
        self.mul(&DVector::from_element(self.ncols(), 1.0))
    }

    /// Rows `rows` (in that order) as a new design with the same storage kind.
    pub fn row_subset(&self, rows: &[usize]) -> CountDesign {
        let storage = match &self.storage {
            Storage::Dense(x) => Storage::Dense(x.select_rows(rows)),
            Storage::Sparse(x) => {
                let mut map = vec![usize::MAX; x.nrows()];
                for (k, &r) in rows.iter().enumerate() {
                    map[r] = k;
                }
                let mut trip = Vec::new();
                for c in 0..x.ncols() {
                    let (ri, vals) = x.column(c);
                    for (&r, &v) in ri.iter().zip(vals) {
                        if map[r] != usize::MAX {
                            trip.push((map[r], c, v));
                        }
                    }
                }
                // Rows may repeat in `rows`; fall back to dense selection then.
                if rows.len() != map.iter().filter(|&&m| m != usize::MAX).count() {
                    Storage::Sparse(CscMatrix::from_dense(&x.to_dense().select_rows(rows)))
                } else {
                    Storage::Sparse(
                        CscMatrix::from_triplets(rows.len(), x.ncols(), &trip)
                            .expect("indices in range"),
                    )
                }
            }
        };
        CountDesign {
            storage,
            scale_factor: self.scale_factor,
        }
    }

    /// Columns `cols` (in that order) as a new design with the same storage kind.
    pub fn column_subset(&self, cols: &[usize]) -> CountDesign {
        let storage = match &self.storage {
            Storage::Dense(x) => Storage::Dense(x.select_columns(cols)),
            Storage::Sparse(x) => {
                let mut trip = Vec::new();
                for (k, &c) in cols.iter().enumerate() {
                    let (ri, vals) = x.column(c);
                    trip.extend(ri.iter().zip(vals).map(|(&r, &v)| (r, k, v)));
                }
                Storage::Sparse(CscMatrix::from_triplets(x.nrows(), cols.len(), &trip).expect("indices in range"))
            }
        };
        CountDesign {
            storage,
            scale_factor: self.scale_factor,
        }
    }

    /// Dense `n x |groups|` matrix whose column `g` sums the columns in
    /// `groups[g]`. With the columns of an aggregation matrix this is `X A`.
    pub fn aggregate<S: AsRef<[usize]>>(&self, groups: &[S]) -> DMatrix<f64> {
        let n = self.nrows();
        let mut out = DMatrix::zeros(n, groups.len());
        for (g, cols) in groups.iter().enumerate() {
            let mut col = out.column_mut(g);
            for &c in cols.as_ref() {
                self.for_each_in_column(c, |r, v| col[r] += v);
            }
        }
        out
    }

    /// `X A` for the full aggregation matrix.
    pub fn times_aggregation(&self, a: &AggregationMatrix) -> DMatrix<f64> {
        let cols: Vec<&[usize]> = (0..a.ncols()).map(|k| a.column(k)).collect();
        self.aggregate(&cols)
    }

    /// Share of rows where the summed counts over `cols` are nonzero.
    pub fn support_fraction(&self, cols: &[usize]) -> f64 {
        let n = self.nrows();
        if n == 0 {
            return 0.0;
        }
        let mut hit = vec![false; n];
        for &c in cols {
            self.for_each_in_column(c, |r, v| {
                if v > 0.0 {
                    hit[r] = true;
                }
            });
        }
        hit.iter().filter(|&&h| h).count() as f64 / n as f64
    }

    fn scaled(&self, c: f64) -> CountDesign {
        let storage = match &self.storage {
            Storage::Dense(x) => Storage::Dense(x * c),
            Storage::Sparse(x) => {
                let mut x = x.clone();
                x.values.iter_mut().for_each(|v| *v *= c);
                Storage::Sparse(x)
            }
        };
        CountDesign {
            storage,
            scale_factor: self.scale_factor * c,
        }
    }
}

/// `sign(x) * max(|x| - lam, 0)`.
#[inline]
pub fn soft_threshold(x: f64, lam: f64) -> f64 {
    debug_assert!(lam >= 0.0);
    if x > lam {
        x - lam
    } else if x < -lam {
        x + lam
    } else {
        0.0
    }
}

pub fn soft_threshold_vec(x: &DVector<f64>, lam: f64) -> DVector<f64> {
    x.map(|v| soft_threshold(v, lam))
}

/// Rescales `X` globally so that `||X 1_p||^2 = n`.
pub fn normalize_for_theory(x: &CountDesign) -> Result<CountDesign> {
    let norm = x.row_sums().norm();
    if norm == 0.0 {
        return Err(Error::ZeroDesign);
    }
    Ok(x.scaled((x.nrows() as f64).sqrt() / norm))
}

/// `v - mean(v)`.
pub fn centering_projection(v: &DVector<f64>) -> DVector<f64> {
    if v.is_empty() {
        return v.clone();
    }
    let m = v.mean();
    let mut out = v.add_scalar(-m);
    // A second pass removes the rounding left by the first.
    let m2 = out.mean();
    out.add_scalar_mut(-m2);
    out
}

/// Thin SVD `M = U diag(d) V^T` keeping singular values above
/// `1e-12 * max(d)`, sorted descending.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: DMatrix<f64>,
    pub d: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.d.len()
    }
}

pub fn compact_svd(m: &DMatrix<f64>) -> Result<CompactSvd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to SVD"));
    }
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(CompactSvd {
            u: DMatrix::zeros(r, 0),
            d: DVector::zeros(0),
            v: DMatrix::zeros(c, 0),
        });
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdNotConverged)?;
    let u = svd.u.ok_or(Error::SvdNotConverged)?;
    let vt = svd.v_t.ok_or(Error::SvdNotConverged)?;
    let s = svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let mut keep: Vec<usize> = (0..s.len()).filter(|&i| smax > 0.0 && s[i] > 1e-12 * smax).collect();
    keep.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    Ok(CompactSvd {
        u: u.select_columns(&keep),
        d: DVector::from_iterator(keep.len(), keep.iter().map(|&i| s[i])),
        v: vt.select_rows(&keep).transpose(),
    })
}

/// Orthogonal projector onto the null space of `(I_p : -A)`, held as the
/// `(p + |T|) x p` basis `Q` of the row space and applied as `z - Q Q^T z`.
#[derive(Debug, Clone)]
pub struct NullspaceProjector {
    q: DMatrix<f64>,
    p: usize,
}

impl NullspaceProjector {
    pub fn new(a: &AggregationMatrix) -> Result<Self> {
        let p = a.nrows();
        let t = a.ncols();
        let mut m = DMatrix::zeros(p, p + t);
        m.view_mut((0, 0), (p, p)).fill_with_identity();
        for k in 0..t {
            for &j in a.column(k) {
                m[(j, p + k)] = -1.0;
            }
        }
        let svd = compact_svd(&m)?;
        if svd.rank() != p {
            return Err(Error::Dimension(format!(
                "(I : -A) has rank {} instead of {}",
                svd.rank(),
                p
            )));
        }
        Ok(Self { q: svd.v, p })
    }

    /// Basis of the row space of `(I_p : -A)`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let c = self.q.tr_mul(z);
        let mut out = z.clone();
        out.gemv(-1.0, &self.q, &c, 1.0);
        out
    }

    /// Projects the stacked pair `(beta; gamma)`.
    pub fn apply_pair(&self, beta: &DVector<f64>, gamma: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.p;
        let mut z = DVector::zeros(p + gamma.len());
        z.rows_mut(0, p).copy_from(beta);
        z.rows_mut(p, gamma.len()).copy_from(gamma);
        let w = self.apply(&z);
        (w.rows(0, p).into_owned(), w.rows(p, gamma.len()).into_owned())
    }
}

/// Orthogonal projection onto `{(beta, gamma) : beta = A gamma}` computed in
/// `O(|T|)` by elimination along the tree.
///
/// The projection of `(b, g)` is `(A g', g')` with `g' = g + z` and
/// `z = argmin ||z||^2 + ||b - A g - A z||^2`. Writing `s_u` for the sum of
/// `z` over the path from the root to `u`, that problem is a chain of
/// quadratic couplings between each node and its parent, which one upward
/// and one downward pass solve exactly. Agrees with
/// [`NullspaceProjector::apply_pair`] up to rounding.
#[derive(Debug, Clone)]
pub struct TreeProjector {
    parent: Vec<Option<usize>>,
    postorder: Vec<usize>,
    leaf_count: usize,
}

impl TreeProjector {
    pub fn new(tree: &crate::tree::FeatureTree) -> Self {
        Self {
            parent: (0..tree.node_count()).map(|u| tree.parent(u)).collect(),
            postorder: tree.postorder().to_vec(),
            leaf_count: tree.leaf_count(),
        }
    }

    /// Writes the projection of `(b, g)` into `(b_out, g_out)`. `work` must
    /// hold at least `2 |T|` entries.
    pub fn project_into(
        &self,
        b: &[f64],
        g: &[f64],
        b_out: &mut [f64],
        g_out: &mut [f64],
        work: &mut [f64],
    ) {
        let m = self.parent.len();
        let (cum, rest) = work.split_at_mut(m);
        let big_c = &mut rest[..m];
        // Path sums of g; g_out temporarily holds the weighted means M_u.
        for &u in self.postorder.iter().rev() {
            cum[u] = g[u] + self.parent[u].map_or(0.0, |p| cum[p]);
        }
        for u in 0..m {
            big_c[u] = 0.0;
            g_out[u] = 0.0;
        }
        for &u in &self.postorder {
            let (c_u, m_u) = if u < self.leaf_count {
                (0.5, b[u] - cum[u])
            } else {
                let c = big_c[u];
                let mean = g_out[u] / c;
                g_out[u] = mean;
                (c / (1.0 + c), mean)
            };
            if let Some(p) = self.parent[u] {
                big_c[p] += c_u;
                g_out[p] += c_u * m_u;
            }
        }
        // Downward pass: big_c becomes s_u, then g_out becomes g + z.
        for &u in self.postorder.iter().rev() {
            let s_par = self.parent[u].map_or(0.0, |p| big_c[p]);
            let s = if u < self.leaf_count {
                (s_par + b[u] - cum[u]) / 2.0
            } else {
                let c = big_c[u];
                (s_par + c * g_out[u]) / (1.0 + c)
            };
            big_c[u] = s;
            g_out[u] = g[u] + s - s_par;
        }
        for j in 0..self.leaf_count {
            b_out[j] = cum[j] + big_c[j];
        }
    }

    pub fn apply_pair(&self, b: &DVector<f64>, g: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let m = self.parent.len();
        let mut bo = DVector::zeros(self.leaf_count);
        let mut go = DVector::zeros(m);
        let mut work = vec![0.0; 2 * m];
        self.project_into(b.as_slice(), g.as_slice(), bo.as_mut_slice(), go.as_mut_slice(), &mut work);
        (bo, go)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::FeatureTree;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
        for x in [-3.0, -0.1, 0.0, 0.7, 12.0] {
            assert_eq!(soft_threshold(x, 0.0), x);
        }
    }

    #[test]
    fn csc_triplets_sum_duplicates() {
        let m = CscMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (1, 0, 2.0), (0, 2, 3.0), (1, 1, 0.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense(), dmatrix![0.0, 0.0, 4.0; 2.0, 0.0, 0.0]);
        assert!(CscMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn dense_and_sparse_agree() {
        let x = dmatrix![1.0, 0.0, 2.0; 0.0, 0.0, 3.0; 4.0, 1.0, 0.0; 0.0, 0.0, 0.0];
        let d = CountDesign::from_dense(x.clone()).unwrap();
        let s = CountDesign::from_sparse(CscMatrix::from_dense(&x)).unwrap();
        let b = dvector![0.5, -1.0, 2.0];
        let r = dvector![1.0, 2.0, -1.0, 3.0];
        assert_eq!(d.mul(&b), s.mul(&b));
        assert_eq!(d.tr_mul(&r), s.tr_mul(&r));
        assert_eq!(d.row_subset(&[2, 0]).to_dense(), s.row_subset(&[2, 0]).to_dense());
        assert_eq!(s.row_subset(&[1, 1]).to_dense(), x.select_rows(&[1, 1]));
        assert_eq!(d.aggregate(&[vec![0, 2]]), s.aggregate(&[vec![0, 2]]));
        assert_eq!(d.support_fraction(&[1]), 0.25);
        assert_eq!(s.support_fraction(&[0, 1]), 0.5);
        assert!((d.density() - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_counts() {
        assert!(matches!(
            CountDesign::from_dense(dmatrix![1.0, -1.0]),
            Err(Error::NegativeCount { row: 0, col: 1 })
        ));
        assert!(CountDesign::from_dense(dmatrix![f64::NAN]).is_err());
    }

    #[test]
    fn normalization() {
        let eye = CountDesign::from_dense(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(normalize_for_theory(&eye).unwrap().to_dense(), DMatrix::identity(4, 4));
        let two = CountDesign::from_dense(DMatrix::identity(4, 4) * 2.0).unwrap();
        let z = normalize_for_theory(&two).unwrap();
        assert_eq!(z.scale_factor(), 0.5);
        assert_eq!(z.to_dense(), DMatrix::identity(4, 4));
        let zero = CountDesign::from_dense(DMatrix::zeros(3, 2)).unwrap();
        assert!(matches!(normalize_for_theory(&zero), Err(Error::ZeroDesign)));
    }

    #[test]
    fn centering() {
        assert_eq!(centering_projection(&dvector![1.0, 2.0, 3.0]), dvector![-1.0, 0.0, 1.0]);
        assert_eq!(centering_projection(&dvector![2.5, 2.5]), dvector![0.0, 0.0]);
    }

    #[test]
    fn svd_identity_and_rank_one() {
        let s = compact_svd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.d, dvector![1.0, 1.0, 1.0]);
        let u = dvector![1.0, 2.0, 3.0];
        let v = dvector![1.0, -1.0];
        let s = compact_svd(&(&u * v.transpose())).unwrap();
        assert_eq!(s.rank(), 1);
        assert!(compact_svd(&dmatrix![f64::INFINITY]).is_err());
    }

    #[test]
    fn projector_lands_on_constraint() {
        let t = FeatureTree::star(2).unwrap();
        let a = AggregationMatrix::from_tree(&t);
        let proj = NullspaceProjector::new(&a).unwrap();
        let (b, g) = proj.apply_pair(&dvector![1.0, -2.0], &dvector![0.0, 0.0, 0.0]);
        assert!((b - a.mul(&g)).amax() < 1e-12);
        // Points already on the constraint are fixed.
        let g0 = dvector![0.3, -0.7, 1.1];
        let (b1, g1) = proj.apply_pair(&a.mul(&g0), &g0);
        assert!((b1 - a.mul(&g0)).amax() < 1e-12);
        assert!((g1 - g0).amax() < 1e-12);
    }

    #[test]
    fn tree_projector_single_node() {
        let t = FeatureTree::star(1).unwrap();
        let (b, g) = TreeProjector::new(&t).apply_pair(&dvector![3.0], &dvector![1.0]);
        assert_eq!((b[0], g[0]), (2.0, 2.0));
    }

    #[test]
    fn tree_projector_matches_basis_projector() {
        let t = FeatureTree::build_from_parent_list(
            &[(1, Some(6)), (2, Some(6)), (3, Some(6)), (4, Some(7)), (5, Some(7)), (6, Some(8)), (7, Some(8)), (8, None)],
            Default::default(),
        )
        .unwrap();
        let a = AggregationMatrix::from_tree(&t);
        let q = NullspaceProjector::new(&a).unwrap();
        let fast = TreeProjector::new(&t);
        let b = dvector![0.3, -1.0, 2.5, 0.0, 1.25];
        let g = dvector![1.0, 0.5, -0.5, 2.0, 0.0, -1.5, 0.75, 0.2];
        let (b1, g1) = q.apply_pair(&b, &g);
        let (b2, g2) = fast.apply_pair(&b, &g);
        assert!((&b1 - &b2).amax() < 1e-12, "{b1} {b2}");
        assert!((&g1 - &g2).amax() < 1e-12);
    }
}
