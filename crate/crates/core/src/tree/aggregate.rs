use super::FeatureTree;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Binary `p x |T|` matrix with `A[j, k] = 1` iff node `k` lies on the path
/// from the root to leaf `j`. Stored as the leaf set of every column.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationMatrix {
    p: usize,
    columns: Vec<Vec<usize>>,
}

impl AggregationMatrix {
    pub fn from_tree(tree: &FeatureTree) -> Self {
        Self {
            p: tree.leaf_count(),
            columns: (0..tree.node_count())
                .map(|u| tree.leaves_under(u).to_vec())
                .collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.p
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// Leaves with a one in column `k`.
    pub fn column(&self, k: usize) -> &[usize] {
        &self.columns[k]
    }

    /// Column submatrix `A_B`.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            p: self.p,
            columns: cols.iter().map(|&k| self.columns[k].clone()).collect(),
        }
    }

    /// `A * gamma`.
    pub fn mul(&self, gamma: &DVector<f64>) -> DVector<f64> {
        assert_eq!(gamma.len(), self.ncols(), "gamma length");
        let mut beta = DVector::zeros(self.p);
        for (col, &g) in self.columns.iter().zip(gamma.iter()) {
            if g != 0.0 {
                for &j in col {
                    beta[j] += g;
                }
            }
        }
        beta
    }

    /// `A^T * beta`.
    pub fn tr_mul(&self, beta: &DVector<f64>) -> DVector<f64> {
        assert_eq!(beta.len(), self.p, "beta length");
        DVector::from_iterator(
            self.ncols(),
            self.columns.iter().map(|col| col.iter().map(|&j| beta[j]).sum()),
        )
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.p, self.ncols());
        for (k, col) in self.columns.iter().enumerate() {
            for &j in col {
                a[(j, k)] = 1.0;
            }
        }
        a
    }
}

/// A set of tree nodes whose branches partition the leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggregatingSet {
    nodes: Vec<usize>,
}

impl AggregatingSet {
    /// Validates that the branches below `nodes` partition the leaves.
    pub fn new(tree: &FeatureTree, mut nodes: Vec<usize>) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        let mut seen = vec![false; tree.leaf_count()];
        for &u in &nodes {
            if u >= tree.node_count() {
                return Err(Error::InvalidTree(format!("node index {} out of range", u)));
            }
            for &j in tree.leaves_under(u) {
                if seen[j] {
                    return Err(Error::InvalidTree(format!(
                        "leaf {} covered twice by aggregating set",
                        j
                    )));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidTree(format!(
                "leaf {} not covered by aggregating set",
                j
            )));
        }
        Ok(Self { nodes })
    }

    pub(crate) fn from_sorted_unchecked(nodes: Vec<usize>) -> Self {
        Self { nodes }
    }

    pub fn leaves(tree: &FeatureTree) -> Self {
        Self {
            nodes: (0..tree.leaf_count()).collect(),
        }
    }

    /// Node indices, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, u: usize) -> bool {
        self.nodes.binary_search(&u).is_ok()
    }

    /// For every leaf, the position in `nodes()` of the branch containing it.
    pub fn group_of_leaves(&self, tree: &FeatureTree) -> Vec<usize> {
        let mut group = vec![0; tree.leaf_count()];
        for (g, &u) in self.nodes.iter().enumerate() {
            for &j in tree.leaves_under(u) {
                group[j] = g;
            }
        }
        group
    }

    /// `A_B * values`: every leaf receives the value of its branch.
    pub fn broadcast(&self, tree: &FeatureTree, values: &DVector<f64>) -> DVector<f64> {
        assert_eq!(values.len(), self.nodes.len(), "one value per branch");
        let mut beta = DVector::zeros(tree.leaf_count());
        for (&u, &v) in self.nodes.iter().zip(values.iter()) {
            for &j in tree.leaves_under(u) {
                beta[j] = v;
            }
        }
        beta
    }
}

/// Coarsest aggregating set on whose branches `beta` is constant.
///
/// Two coefficients count as equal when they differ by at most `tol`; a
/// branch is constant when the spread `max - min` over its leaves is at most
/// `tol`. The result is the set of maximal constant branches: every member
/// is constant and its parent (if any) is not. Constancy is inherited by
/// sub-branches, so the maximal branches partition the leaves and the set
/// does not depend on the order in which siblings are visited.
pub fn coarsest_aggregating_set(
    tree: &FeatureTree,
    beta: &DVector<f64>,
    tol: f64,
) -> AggregatingSet {
    assert_eq!(beta.len(), tree.leaf_count(), "beta length");
    assert!(tol >= 0.0, "tolerance must be nonnegative");
    let m = tree.node_count();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for &u in tree.postorder() {
        if tree.is_leaf(u) {
            lo[u] = beta[u];
            hi[u] = beta[u];
        } else {
            for &c in tree.children(u) {
                lo[u] = lo[u].min(lo[c]);
                hi[u] = hi[u].max(hi[c]);
            }
        }
    }
    let constant = |u: usize| hi[u] - lo[u] <= tol;
    let nodes: Vec<usize> = (0..m)
        .filter(|&u| constant(u) && tree.parent(u).is_none_or(|p| !constant(p)))
        .collect();
    AggregatingSet::from_sorted_unchecked(nodes)
}
