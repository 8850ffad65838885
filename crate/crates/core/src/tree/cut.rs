use super::{AggregatingSet, FeatureTree};
use crate::error::{Error, Result};
use crate::linop::CountDesign;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutMode {
    /// Clusters are the maximal branches whose merge height is at most the
    /// threshold.
    Height,
    /// Bottom-up merging until every aggregated feature is nonzero in at
    /// least a `threshold` fraction of the rows.
    Density,
}

impl fmt::Display for CutMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CutMode::Height => "height",
            CutMode::Density => "density",
        })
    }
}

impl FromStr for CutMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "height" => Ok(CutMode::Height),
            "density" => Ok(CutMode::Density),
            other => Err(Error::Config(format!("unknown cut mode '{}'", other))),
        }
    }
}

/// Flattens a tree into an aggregating set.
///
/// Height mode walks down from the root and stops at the first node whose
/// height is at most `threshold` (leaves have height 0). Density mode merges
/// bottom-up: a node collapses into a single group whenever one of the groups
/// formed below it has a support fraction (share of rows where the summed
/// counts are nonzero) under `threshold`. Every resulting group is then dense
/// enough, except possibly the whole tree.
pub fn cut_tree(
    tree: &FeatureTree,
    mode: CutMode,
    threshold: f64,
    x: Option<&CountDesign>,
) -> Result<AggregatingSet> {
    if !threshold.is_finite() {
        return Err(Error::NonFinite("cut threshold"));
    }
    match mode {
        CutMode::Height => cut_height(tree, threshold),
        CutMode::Density => {
            let x = x.ok_or_else(|| Error::Config("density cut requires a design matrix".into()))?;
            if x.ncols() != tree.leaf_count() {
                return Err(Error::Dimension(format!(
                    "design has {} columns, tree has {} leaves",
                    x.ncols(),
                    tree.leaf_count()
                )));
            }
            Ok(cut_density(tree, threshold, x))
        }
    }
}

fn cut_height(tree: &FeatureTree, threshold: f64) -> Result<AggregatingSet> {
    if !tree.has_heights() {
        return Err(Error::Config("height cut requires merge heights".into()));
    }
    let mut out = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(u) = stack.pop() {
        let h = if tree.is_leaf(u) { 0.0 } else { tree.height(u).unwrap_or(0.0) };
        if tree.is_leaf(u) || h <= threshold {
            out.push(u);
        } else {
            stack.extend_from_slice(tree.children(u));
        }
    }
    out.sort_unstable();
    Ok(AggregatingSet::from_sorted_unchecked(out))
}

fn cut_density(tree: &FeatureTree, threshold: f64, x: &CountDesign) -> AggregatingSet {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); tree.node_count()];
    for &u in tree.postorder() {
        if tree.is_leaf(u) {
            groups[u] = vec![u];
            continue;
        }
        let below: Vec<usize> = tree
            .children(u)
            .iter()
            .flat_map(|&c| groups[c].iter().copied())
            .collect();
        let sparse = below
            .iter()
            .any(|&g| x.support_fraction(tree.leaves_under(g)) < threshold);
        groups[u] = if sparse { vec![u] } else { below };
    }
    let mut nodes = std::mem::take(&mut groups[tree.root()]);
    nodes.sort_unstable();
    AggregatingSet::from_sorted_unchecked(nodes)
}

/// Cuts the tree into (at least) `k` branches by removing the `k - 1`
/// highest merges. Ties in height go to the later node.
pub fn cut_tree_k(tree: &FeatureTree, k: usize) -> Result<AggregatingSet> {
    if k == 0 || k > tree.leaf_count() {
        return Err(Error::Config(format!(
            "cannot cut a tree with {} leaves into {} branches",
            tree.leaf_count(),
            k
        )));
    }
    let key = |u: usize| (tree.height(u).unwrap_or(0.0), u);
    let mut frontier = vec![tree.root()];
    while frontier.len() < k {
        let (pos, _) = frontier
            .iter()
            .enumerate()
            .filter(|(_, &u)| !tree.is_leaf(u))
            .max_by(|(_, &a), (_, &b)| key(a).partial_cmp(&key(b)).expect("finite heights"))
            .expect("fewer branches than leaves leaves an internal node");
        let u = frontier.swap_remove(pos);
        frontier.extend_from_slice(tree.children(u));
    }
    frontier.sort_unstable();
    Ok(AggregatingSet::from_sorted_unchecked(frontier))
}
