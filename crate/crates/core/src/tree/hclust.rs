//! Agglomerative clustering of feature vectors into a binary [`FeatureTree`].
//!
//! Distances are Euclidean. Cluster dissimilarities are maintained with the
//! Lance-Williams recurrences on a stored distance matrix, with a cached
//! nearest neighbour per row. Ward linkage works on squared distances and
//! reports merge heights on the distance scale (the `ward.D2` convention).
//!
//! Each active cluster occupies the slot of its smallest leaf index. Among
//! pairs at the minimal dissimilarity the lexicographically smallest slot
//! pair `(i, j)`, `i < j`, is merged first, which makes the output a pure
//! function of the input order.

use super::FeatureTree;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linkage {
    #[default]
    Complete,
    Average,
    Single,
    Ward,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Single => "single",
            Linkage::Ward => "ward",
        })
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            "single" => Ok(Linkage::Single),
            "ward" | "ward.D2" => Ok(Linkage::Ward),
            other => Err(Error::Config(format!("unknown linkage '{}'", other))),
        }
    }
}

/// Clusters the rows of `vectors` and returns the merge tree.
///
/// Leaves are the rows in input order (labels `1..=n`); merge `m` creates
/// node `n + m + 1` and records its height. A single row yields a one-node
/// tree.
pub fn build_tree_hclust(vectors: &DMatrix<f64>, linkage: Linkage) -> Result<FeatureTree> {
    let n = vectors.nrows();
    if n == 0 || vectors.ncols() == 0 {
        return Err(Error::Dimension("need at least one item and one coordinate".into()));
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering vectors"));
    }
    let merges = agglomerate(vectors, linkage);
    FeatureTree::from_merges(n, &merges)
}

/// Returns merges as `(left node, right node, height)` with node indices in
/// the leaves-then-merges numbering.
fn agglomerate(vectors: &DMatrix<f64>, linkage: Linkage) -> Vec<(usize, usize, f64)> {
    let n = vectors.nrows();
    let squared = linkage == Linkage::Ward;
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = (0..vectors.ncols())
                .map(|c| {
                    let d = vectors[(i, c)] - vectors[(j, c)];
                    d * d
                })
                .sum();
            let d = if squared { d2 } else { d2.sqrt() };
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<_>>();
    // Nearest active neighbour with a larger slot index.
    let mut nn = vec![usize::MAX; n];
    let mut nn_dist = vec![f64::INFINITY; n];
    let refresh = |i: usize, active: &[bool], dist: &[f64], nn: &mut [usize], nn_dist: &mut [f64]| {
        nn[i] = usize::MAX;
        nn_dist[i] = f64::INFINITY;
        for j in (i + 1)..n {
            if active[j] && dist[i * n + j] < nn_dist[i] {
                nn[i] = j;
                nn_dist[i] = dist[i * n + j];
            }
        }
    };
    for i in 0..n {
        refresh(i, &active, &dist, &mut nn, &mut nn_dist);
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut i = usize::MAX;
        let mut best = f64::INFINITY;
        for k in 0..n {
            if active[k] && nn[k] != usize::MAX && (i == usize::MAX || nn_dist[k] < best) {
                i = k;
                best = nn_dist[k];
            }
        }
        let j = nn[i];
        let d_ij = dist[i * n + j];
        let height = if squared { d_ij.max(0.0).sqrt() } else { d_ij };
        merges.push((node[i], node[j], height));

        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let (d_ik, d_jk) = (dist[i * n + k], dist[j * n + k]);
            let nk = size[k] as f64;
            let updated = match linkage {
                Linkage::Single => d_ik.min(d_jk),
                Linkage::Complete => d_ik.max(d_jk),
                Linkage::Average => (ni * d_ik + nj * d_jk) / (ni + nj),
                Linkage::Ward => {
                    ((ni + nk) * d_ik + (nj + nk) * d_jk - nk * d_ij) / (ni + nj + nk)
                }
            };
            dist[i * n + k] = updated;
            dist[k * n + i] = updated;
        }
        active[j] = false;
        size[i] += size[j];
        node[i] = n + step;

        refresh(i, &active, &dist, &mut nn, &mut nn_dist);
        for k in 0..i {
            if !active[k] {
                continue;
            }
            if nn[k] == i || nn[k] == j {
                refresh(k, &active, &dist, &mut nn, &mut nn_dist);
            } else {
                let d = dist[k * n + i];
                if d < nn_dist[k] || (d == nn_dist[k] && i < nn[k]) {
                    nn[k] = i;
                    nn_dist[k] = d;
                }
            }
        }
        // Rows between i and j may have pointed at j.
        for k in (i + 1)..j {
            if active[k] && nn[k] == j {
                refresh(k, &active, &dist, &mut nn, &mut nn_dist);
            }
        }
    }
    merges
}
