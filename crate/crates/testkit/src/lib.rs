//! Slow, independent reference implementations used as test oracles.
//!
//! Nothing here shares code with the main crate: trees are plain parent
//! vectors and matrices are dense.

use nalgebra::{DMatrix, DVector};

/// A rooted tree as `parent[u]` (None for the root) over nodes `0..m`, where
/// nodes `0..p` are the leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainTree {
    pub parent: Vec<Option<usize>>,
    pub p: usize,
}

impl PlainTree {
    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.parent.iter().position(|q| q.is_none()).expect("a root")
    }

    pub fn children(&self, u: usize) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| self.parent[v] == Some(u)).collect()
    }

    /// Leaves under `u`, ascending.
    pub fn leaves_under(&self, u: usize) -> Vec<usize> {
        (0..self.p)
            .filter(|&j| {
                let mut v = Some(j);
                while let Some(w) = v {
                    if w == u {
                        return true;
                    }
                    v = self.parent[w];
                }
                false
            })
            .collect()
    }

    /// Dense `p x m` matrix with `A[j, u] = 1` when leaf `j` lies under `u`.
    pub fn aggregation_matrix(&self) -> DMatrix<f64> {
        let m = self.node_count();
        let mut a = DMatrix::zeros(self.p, m);
        for u in 0..m {
            for j in self.leaves_under(u) {
                a[(j, u)] = 1.0;
            }
        }
        a
    }
}

/// Every aggregating set of the tree: sets of nodes whose leaf sets
/// partition the leaves. Each set is sorted ascending.
pub fn all_aggregating_sets(t: &PlainTree) -> Vec<Vec<usize>> {
    fn below(t: &PlainTree, u: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![u]];
        let ch = t.children(u);
        if ch.is_empty() {
            return out;
        }
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for c in ch {
            let opts = below(t, c);
            let mut next = Vec::new();
            for partial in &combos {
                for o in &opts {
                    let mut v = partial.clone();
                    v.extend_from_slice(o);
                    next.push(v);
                }
            }
            combos = next;
        }
        out.extend(combos);
        out
    }
    let mut all = below(t, t.root());
    for s in &mut all {
        s.sort_unstable();
    }
    all
}

/// Smallest aggregating set on whose members `beta` is constant (spread at
/// most `tol`), by exhaustive search.
pub fn brute_coarsest(t: &PlainTree, beta: &[f64], tol: f64) -> Vec<usize> {
    all_aggregating_sets(t)
        .into_iter()
        .filter(|s| {
            s.iter().all(|&u| {
                let l = t.leaves_under(u);
                let lo = l.iter().map(|&j| beta[j]).fold(f64::INFINITY, f64::min);
                let hi = l.iter().map(|&j| beta[j]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo <= tol
            })
        })
        .min_by_key(|s| s.len())
        .expect("the leaves always qualify")
}

/// All rooted trees on leaves `0..p` in which every internal node has at
/// least two children and the total node count is at most `max_nodes`.
/// Internal nodes are numbered from `p` in order of creation.
pub fn all_trees(p: usize, max_nodes: usize) -> Vec<PlainTree> {
    // A tree over a leaf set is a leaf or a split of the set into >= 2
    // blocks, each carrying its own tree.
    #[derive(Clone)]
    enum Shape {
        Leaf(usize),
        Node(Vec<Shape>),
    }
    fn count(s: &Shape) -> usize {
        match s {
            Shape::Leaf(_) => 1,
            Shape::Node(c) => 1 + c.iter().map(count).sum::<usize>(),
        }
    }
    fn partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
        if items.is_empty() {
            return vec![Vec::new()];
        }
        let first = items[0];
        let mut out = Vec::new();
        for rest in partitions(&items[1..]) {
            for i in 0..rest.len() {
                let mut r = rest.clone();
                r[i].insert(0, first);
                out.push(r);
            }
            let mut r = rest.clone();
            r.insert(0, vec![first]);
            out.push(r);
        }
        out
    }
    fn shapes(items: &[usize], budget: usize) -> Vec<Shape> {
        if items.len() == 1 {
            return vec![Shape::Leaf(items[0])];
        }
        let mut out = Vec::new();
        for blocks in partitions(items) {
            if blocks.len() < 2 {
                continue;
            }
            let mut combos: Vec<Vec<Shape>> = vec![Vec::new()];
            for b in &blocks {
                let opts = shapes(b, budget);
                let mut next = Vec::new();
                for c in &combos {
                    for o in &opts {
                        let mut v = c.clone();
                        v.push(o.clone());
                        next.push(v);
                    }
                }
                combos = next;
            }
            for c in combos {
                let s = Shape::Node(c);
                if count(&s) <= budget {
                    out.push(s);
                }
            }
        }
        out
    }
    fn emit(s: &Shape, parent: Option<usize>, next: &mut usize, out: &mut Vec<Option<usize>>) {
        match s {
            Shape::Leaf(j) => out[*j] = parent,
            Shape::Node(c) => {
                let id = *next;
                *next += 1;
                out.push(parent);
                for ch in c {
                    emit(ch, Some(id), next, out);
                }
            }
        }
    }
    let leaves: Vec<usize> = (0..p).collect();
    shapes(&leaves, max_nodes)
        .iter()
        .map(|s| {
            let mut parent = vec![None; p];
            let mut next = p;
            emit(s, None, &mut next, &mut parent);
            PlainTree { parent, p }
        })
        .collect()
}

/// One tree per unlabeled shape: every rooted tree with at least two
/// children per internal node and at most `max_nodes` nodes, up to
/// reordering of children. Leaves are numbered `0..p` in depth-first order.
pub fn all_tree_shapes(max_nodes: usize) -> Vec<PlainTree> {
    // by_size[s] lists the shapes with s nodes; a shape is the sorted list
    // of its children as (size, index) pairs, empty for a leaf.
    let mut by_size: Vec<Vec<Vec<(usize, usize)>>> = vec![Vec::new(); max_nodes + 1];
    if max_nodes >= 1 {
        by_size[1].push(Vec::new());
    }
    fn fill(
        left: usize,
        min: (usize, usize),
        cur: &mut Vec<(usize, usize)>,
        by_size: &[Vec<Vec<(usize, usize)>>],
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if left == 0 {
            if cur.len() >= 2 {
                out.push(cur.clone());
            }
            return;
        }
        for size in min.0..=left {
            let start = if size == min.0 { min.1 } else { 0 };
            for idx in start..by_size[size].len() {
                cur.push((size, idx));
                fill(left - size, (size, idx), cur, by_size, out);
                cur.pop();
            }
        }
    }
    for s in 2..=max_nodes {
        let mut out = Vec::new();
        fill(s - 1, (1, 0), &mut Vec::new(), &by_size, &mut out);
        by_size[s] = out;
    }
    fn leaves(by_size: &[Vec<Vec<(usize, usize)>>], size: usize, idx: usize) -> usize {
        let ch = &by_size[size][idx];
        if ch.is_empty() {
            1
        } else {
            ch.iter().map(|&(s, i)| leaves(by_size, s, i)).sum()
        }
    }
    fn emit(
        by_size: &[Vec<Vec<(usize, usize)>>],
        size: usize,
        idx: usize,
        parent: Option<usize>,
        next_leaf: &mut usize,
        out: &mut Vec<Option<usize>>,
    ) {
        let ch = &by_size[size][idx];
        if ch.is_empty() {
            out[*next_leaf] = parent;
            *next_leaf += 1;
            return;
        }
        let id = out.len();
        out.push(parent);
        for &(s, i) in ch {
            emit(by_size, s, i, Some(id), next_leaf, out);
        }
    }
    let mut trees = Vec::new();
    for size in 1..=max_nodes {
        for idx in 0..by_size[size].len() {
            let p = leaves(&by_size, size, idx);
            let mut parent = vec![None; p];
            let mut next_leaf = 0;
            emit(&by_size, size, idx, None, &mut next_leaf, &mut parent);
            trees.push(PlainTree { parent, p });
        }
    }
    trees
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveLinkage {
    Single,
    Complete,
    Average,
    /// Ward on the distance scale: `sqrt(2 |A||B| / (|A| + |B|)) ||c_A - c_B||`.
    Ward,
}

/// Agglomerative clustering by recomputing every cluster dissimilarity from
/// the raw points at every step. Returns merges as (members of the first
/// cluster, members of the second, height); clusters are named by their
/// smallest member and ties go to the lexicographically smallest pair.
pub fn naive_hclust(points: &DMatrix<f64>, linkage: NaiveLinkage) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let n = points.nrows();
    let dist = |i: usize, j: usize| (points.row(i) - points.row(j)).norm();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let (ca, cb) = (&clusters[a], &clusters[b]);
                let d = match linkage {
                    NaiveLinkage::Single => ca
                        .iter()
                        .flat_map(|&i| cb.iter().map(move |&j| (i, j)))
                        .map(|(i, j)| dist(i, j))
                        .fold(f64::INFINITY, f64::min),
                    NaiveLinkage::Complete => ca
                        .iter()
                        .flat_map(|&i| cb.iter().map(move |&j| (i, j)))
                        .map(|(i, j)| dist(i, j))
                        .fold(0.0, f64::max),
                    NaiveLinkage::Average => {
                        let s: f64 = ca
                            .iter()
                            .flat_map(|&i| cb.iter().map(move |&j| (i, j)))
                            .map(|(i, j)| dist(i, j))
                            .sum();
                        s / (ca.len() * cb.len()) as f64
                    }
                    NaiveLinkage::Ward => {
                        let centroid = |c: &Vec<usize>| {
                            let mut m = points.row(c[0]).clone_owned() * 0.0;
                            for &i in c {
                                m += points.row(i);
                            }
                            m / c.len() as f64
                        };
                        let (na, nb) = (ca.len() as f64, cb.len() as f64);
                        (2.0 * na * nb / (na + nb)).sqrt() * (centroid(ca) - centroid(cb)).norm()
                    }
                };
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (h, a, b) = best;
        let cb = clusters.remove(b);
        let ca = clusters[a].clone();
        merges.push((ca.clone(), cb.clone(), h));
        clusters[a].extend(cb);
        clusters[a].sort_unstable();
        clusters.sort_by_key(|c| c[0]);
    }
    merges
}

/// `erf` by its Maclaurin series for `|x| < 3` and a continued fraction for
/// `erfc` beyond.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x2 / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        1.0 - erfc_cf(x)
    }
}

/// `erfc(x)` for `x >= 3` by Lentz's method on the Laplace continued
/// fraction.
fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// Standard normal distribution function through [`erf`].
pub fn phi(x: f64) -> f64 {
    if x < -3.0 * std::f64::consts::SQRT_2 {
        0.5 * erfc_cf(-x / std::f64::consts::SQRT_2)
    } else {
        0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
    }
}

/// Leave-one-out mean squared prediction error of least squares without
/// intercept, from the hat matrix: `mean((r_i / (1 - h_ii))^2)`.
pub fn ols_loo_mspe(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let g = (x.transpose() * x).try_inverse().expect("full column rank");
    let h = x * &g * x.transpose();
    let r = y - &h * y;
    let n = y.len();
    (0..n).map(|i| (r[i] / (1.0 - h[(i, i)])).powi(2)).sum::<f64>() / n as f64
}

/// Objective `1/(2n) ||y - X A g||^2 + lambda (alpha ||g_{-root}||_1 + (1 - alpha) ||A g||_1)`.
pub fn gamma_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    root: usize,
    g: &DVector<f64>,
    lambda: f64,
    alpha: f64,
) -> f64 {
    let n = y.len() as f64;
    let beta = a * g;
    let fit = (y - x * &beta).norm_squared() / (2.0 * n);
    let gl1: f64 = g.iter().enumerate().filter(|(u, _)| *u != root).map(|(_, v)| v.abs()).sum();
    fit + lambda * (alpha * gl1 + (1.0 - alpha) * beta.lp_norm(1))
}

/// Accelerated proximal gradient on the `gamma` form of the problem.
///
/// The penalty is `lambda ||D g||_1` with `D` stacking `alpha` times the
/// non-root coordinate selectors and `(1 - alpha) A`; its prox is computed
/// from the dual box-constrained problem
/// `min_{|u|_inf <= t lambda} 1/2 ||v - D^T u||^2`, itself solved by
/// accelerated projected gradient.
pub fn prox_gradient_gamma(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    root: usize,
    lambda: f64,
    alpha: f64,
    outer_iters: usize,
) -> DVector<f64> {
    let n = y.len() as f64;
    let m = a.ncols();
    let xa = x * a;
    let hess = xa.transpose() * &xa / n;
    let lip = hess.symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lip;
    let xty = xa.transpose() * y / n;

    let rows: Vec<usize> = (0..m).filter(|&u| u != root).collect();
    let p = a.nrows();
    let mut d = DMatrix::zeros(rows.len() + p, m);
    for (r, &u) in rows.iter().enumerate() {
        d[(r, u)] = alpha;
    }
    for j in 0..p {
        for u in 0..m {
            d[(rows.len() + j, u)] = (1.0 - alpha) * a[(j, u)];
        }
    }
    let ddt_norm = (&d * d.transpose()).symmetric_eigenvalues().max().max(1e-12);
    let mut dual = DVector::zeros(d.nrows());

    let prox = |v: &DVector<f64>, bound: f64, dual: &mut DVector<f64>| -> DVector<f64> {
        let inner_step = 1.0 / ddt_norm;
        let mut u = dual.clone();
        let mut w = u.clone();
        let mut t = 1.0f64;
        for _ in 0..4000 {
            let grad = &d * (d.transpose() * &w - v);
            let mut un = &w - grad * inner_step;
            un.apply(|z| *z = z.clamp(-bound, bound));
            let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let diff = &un - &u;
            w = &un + diff.clone() * ((t - 1.0) / tn);
            let done = diff.amax() < 1e-15 * (1.0 + bound);
            u = un;
            t = tn;
            if done {
                break;
            }
        }
        *dual = u.clone();
        v - d.transpose() * u
    };

    let mut g = DVector::zeros(m);
    let mut z = g.clone();
    let mut t = 1.0f64;
    for _ in 0..outer_iters {
        let grad = &hess * &z - &xty;
        let gn = prox(&(&z - grad * step), step * lambda, &mut dual);
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &gn + (&gn - &g) * ((t - 1.0) / tn);
        g = gn;
        t = tn;
    }
    g
}
