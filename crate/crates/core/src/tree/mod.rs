//! Side-information trees over features.
//!
//! A [`FeatureTree`] is a rooted tree whose leaves are the `p` features. Nodes
//! are stored in a canonical order: leaves first (feature `j` is node `j`),
//! then internal nodes, with the root last. That order is also the column
//! order of the [`AggregationMatrix`], so `beta = A * gamma` assigns every
//! leaf coefficient the sum of `gamma` along its root-to-leaf path.
//!
//! Node indices used throughout the API are these canonical 0-based
//! positions. The integer labels read from (and written to) tree files are
//! kept separately and only matter for I/O.

mod aggregate;
mod cut;
mod hclust;
mod io;

pub use aggregate::{coarsest_aggregating_set, AggregatingSet, AggregationMatrix};
pub use cut::{cut_tree, cut_tree_k, CutMode};
pub use hclust::{build_tree_hclust, Linkage};
pub use io::{read_tree_csv, write_tree_csv};

use crate::error::{Error, Result};
use std::collections::HashMap;

/// One row of a parent list: node label, parent label (`None` for the root)
/// and an optional merge height.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentEntry {
    pub id: usize,
    pub parent: Option<usize>,
    pub height: Option<f64>,
}

impl ParentEntry {
    pub fn new(id: usize, parent: Option<usize>) -> Self {
        Self {
            id,
            parent,
            height: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Splice out internal nodes that have a single child instead of
    /// rejecting the tree.
    pub collapse_unary: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    label: usize,
    parent: Option<usize>,
    children: Vec<usize>,
    height: Option<f64>,
}

/// Rooted full tree whose leaves are the features `0..p`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTree {
    nodes: Vec<Node>,
    leaf_count: usize,
    /// Leaves below each node, ascending.
    leaves: Vec<Vec<usize>>,
    /// Children-before-parent order, root last.
    postorder: Vec<usize>,
    depth: Vec<usize>,
}

impl FeatureTree {
    /// Builds and validates a tree from `(node, parent)` pairs.
    ///
    /// Leaves are ordered by label and become features `0..p`; internal nodes
    /// follow in label order and the root is placed last.
    pub fn from_parent_list(entries: &[ParentEntry], opts: BuildOptions) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidTree("empty parent list".into()));
        }
        let mut pos: HashMap<usize, usize> = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if pos.insert(e.id, i).is_some() {
                return Err(Error::InvalidTree(format!("duplicate node id {}", e.id)));
            }
            if let Some(h) = e.height {
                if !h.is_finite() {
                    return Err(Error::NonFinite("node heights"));
                }
            }
        }
        let roots: Vec<usize> = entries
            .iter()
            .filter(|e| e.parent.is_none())
            .map(|e| e.id)
            .collect();
        match roots.len() {
            0 => return Err(Error::InvalidTree("no root (cycle detected)".into())),
            1 => {}
            _ => {
                return Err(Error::InvalidTree(format!(
                    "multiple roots: {:?}",
                    roots
                )))
            }
        }

        let m = entries.len();
        let mut parent: Vec<Option<usize>> = vec![None; m];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (i, e) in entries.iter().enumerate() {
            if let Some(pl) = e.parent {
                let pi = *pos.get(&pl).ok_or_else(|| {
                    Error::InvalidTree(format!("node {} has unknown parent {}", e.id, pl))
                })?;
                if pi == i {
                    return Err(Error::InvalidTree(format!(
                        "cycle detected: node {} is its own parent",
                        e.id
                    )));
                }
                parent[i] = Some(pi);
                children[pi].push(i);
            }
        }
        // Every node must reach the root within m steps.
        for start in 0..m {
            let mut cur = start;
            let mut steps = 0;
            while let Some(p) = parent[cur] {
                cur = p;
                steps += 1;
                if steps > m {
                    return Err(Error::InvalidTree(format!(
                        "cycle detected through node {}",
                        entries[start].id
                    )));
                }
            }
        }

        let mut alive = vec![true; m];
        let mut root = pos[&roots[0]];
        let unary: Vec<usize> = (0..m).filter(|&i| children[i].len() == 1).collect();
        if !unary.is_empty() && !opts.collapse_unary {
            return Err(Error::InvalidTree(format!(
                "internal node {} has a single child",
                entries[unary[0]].id
            )));
        }
        for &u in &unary {
            let c = children[u][0];
            let gp = parent[u];
            parent[c] = gp;
            match gp {
                Some(g) => {
                    for slot in children[g].iter_mut() {
                        if *slot == u {
                            *slot = c;
                        }
                    }
                }
                None => root = c,
            }
            children[u].clear();
            alive[u] = false;
        }

        // Canonical order: leaves by label, internal by label, root last.
        let mut leaves: Vec<usize> = (0..m)
            .filter(|&i| alive[i] && children[i].is_empty())
            .collect();
        leaves.sort_by_key(|&i| entries[i].id);
        let mut internal: Vec<usize> = (0..m)
            .filter(|&i| alive[i] && !children[i].is_empty() && i != root)
            .collect();
        internal.sort_by_key(|&i| entries[i].id);
        let mut order = leaves.clone();
        order.extend(internal);
        if !children[root].is_empty() {
            order.push(root);
        }
        let mut new_index = vec![usize::MAX; m];
        for (k, &i) in order.iter().enumerate() {
            new_index[i] = k;
        }
        let nodes: Vec<Node> = order
            .iter()
            .map(|&i| Node {
                label: entries[i].id,
                parent: parent[i].map(|p| new_index[p]),
                children: children[i].iter().map(|&c| new_index[c]).collect(),
                height: entries[i].height,
            })
            .collect();
        Self::from_nodes(nodes, leaves.len())
    }

    /// Builds a tree from `(id, parent)` pairs without heights.
    pub fn build_from_parent_list(
        parents: &[(usize, Option<usize>)],
        opts: BuildOptions,
    ) -> Result<Self> {
        let entries: Vec<ParentEntry> = parents
            .iter()
            .map(|&(id, parent)| ParentEntry::new(id, parent))
            .collect();
        Self::from_parent_list(&entries, opts)
    }

    /// Star tree: a root directly above `p` leaves (a single leaf when `p == 1`).
    pub fn star(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidTree("tree needs at least one leaf".into()));
        }
        if p == 1 {
            return Self::build_from_parent_list(&[(1, None)], BuildOptions::default());
        }
        let mut parents: Vec<(usize, Option<usize>)> = (1..=p).map(|j| (j, Some(p + 1))).collect();
        parents.push((p + 1, None));
        Self::build_from_parent_list(&parents, BuildOptions::default())
    }

    /// Nodes must already be in canonical order with consistent links.
    fn from_nodes(nodes: Vec<Node>, leaf_count: usize) -> Result<Self> {
        let m = nodes.len();
        if leaf_count == 0 {
            return Err(Error::InvalidTree("tree needs at least one leaf".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            let is_leaf = i < leaf_count;
            if is_leaf != node.children.is_empty() {
                return Err(Error::InvalidTree("leaves must precede internal nodes".into()));
            }
            if !is_leaf && node.children.len() < 2 {
                return Err(Error::InvalidTree(format!(
                    "internal node {} has a single child",
                    node.label
                )));
            }
            if node.parent.is_none() != (i == m - 1) {
                return Err(Error::InvalidTree("root must be the last node".into()));
            }
        }
        if m > 2 * leaf_count {
            return Err(Error::InvalidTree(format!(
                "{} nodes exceed twice the {} leaves",
                m, leaf_count
            )));
        }

        let root = m - 1;
        let mut postorder = Vec::with_capacity(m);
        let mut stack = vec![(root, false)];
        while let Some((u, expanded)) = stack.pop() {
            if expanded {
                postorder.push(u);
            } else {
                stack.push((u, true));
                for &c in nodes[u].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        if postorder.len() != m {
            return Err(Error::InvalidTree("tree is not connected".into()));
        }
        let mut depth = vec![0usize; m];
        for &u in postorder.iter().rev() {
            if let Some(p) = nodes[u].parent {
                depth[u] = depth[p] + 1;
            }
        }
        let mut leaves: Vec<Vec<usize>> = vec![Vec::new(); m];
        for &u in &postorder {
            if u < leaf_count {
                leaves[u] = vec![u];
            } else {
                let mut acc: Vec<usize> = nodes[u]
                    .children
                    .iter()
                    .flat_map(|&c| leaves[c].iter().copied())
                    .collect();
                acc.sort_unstable();
                leaves[u] = acc;
            }
        }
        Ok(Self {
            nodes,
            leaf_count,
            leaves,
            postorder,
            depth,
        })
    }

    /// Number of leaves `p`.
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Number of nodes `|T|`.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn parent(&self, u: usize) -> Option<usize> {
        self.nodes[u].parent
    }

    pub fn children(&self, u: usize) -> &[usize] {
        &self.nodes[u].children
    }

    pub fn is_leaf(&self, u: usize) -> bool {
        u < self.leaf_count
    }

    /// Leaves of the branch rooted at `u`, ascending.
    pub fn leaves_under(&self, u: usize) -> &[usize] {
        &self.leaves[u]
    }

    /// Label of node `u` as it appears in tree files.
    pub fn label(&self, u: usize) -> usize {
        self.nodes[u].label
    }

    pub fn height(&self, u: usize) -> Option<f64> {
        self.nodes[u].height
    }

    /// True when every internal node carries a merge height.
    pub fn has_heights(&self) -> bool {
        (self.leaf_count..self.node_count()).all(|u| self.nodes[u].height.is_some())
    }

    pub fn index_of_label(&self, label: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    /// Nodes ordered children-before-parents, ending at the root.
    pub fn postorder(&self) -> &[usize] {
        &self.postorder
    }

    /// Number of nodes on the root-to-`u` path, inclusive.
    pub fn path_len(&self, u: usize) -> usize {
        self.depth[u] + 1
    }

    /// Nodes on the path from `u` up to the root, starting at `u`.
    pub fn path_to_root(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(u), move |&v| self.nodes[v].parent)
    }

    /// Parent list in canonical order, as written to tree files.
    pub fn to_parent_list(&self) -> Vec<ParentEntry> {
        self.nodes
            .iter()
            .map(|n| ParentEntry {
                id: n.label,
                parent: n.parent.map(|p| self.nodes[p].label),
                height: n.height,
            })
            .collect()
    }

    /// Copy of the tree with children visited in a different order.
    /// Structure, labels and indices are unchanged; only `children(u)` order
    /// differs. Used to check order independence of tree algorithms.
    pub fn with_children_order(&self, mut perm: impl FnMut(usize, &mut Vec<usize>)) -> Self {
        let mut nodes = self.nodes.clone();
        for (u, n) in nodes.iter_mut().enumerate() {
            perm(u, &mut n.children);
        }
        Self::from_nodes(nodes, self.leaf_count).expect("reordering keeps a valid tree")
    }

    pub(crate) fn from_merges(n: usize, merges: &[(usize, usize, f64)]) -> Result<Self> {
        // Leaves 0..n, merge m creates node n + m. Labels are 1-based.
        let total = n + merges.len();
        let mut nodes: Vec<Node> = (0..total)
            .map(|i| Node {
                label: i + 1,
                parent: None,
                children: Vec::new(),
                height: if i < n { None } else { Some(merges[i - n].2) },
            })
            .collect();
        for (m, &(a, b, _)) in merges.iter().enumerate() {
            let id = n + m;
            nodes[a].parent = Some(id);
            nodes[b].parent = Some(id);
            nodes[id].children = vec![a, b];
        }
        Self::from_nodes(nodes, n)
    }
}
