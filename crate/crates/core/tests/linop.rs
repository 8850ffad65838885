use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use treeagg::linop::*;
use treeagg::tree::{build_tree_hclust, Linkage};
use treeagg::{AggregationMatrix, CountDesign, FeatureTree};

fn random_tree(p: usize, seed: u64) -> FeatureTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = DMatrix::from_fn(p, 2, |_, _| rng.random_range(0.0..1.0));
    build_tree_hclust(&pts, Linkage::Average).unwrap()
}

#[test]
fn soft_threshold_examples_and_shape() {
    assert_eq!(soft_threshold(3.0, 1.0), 2.0);
    assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
    for x in [-4.0, -0.1, 0.0, 2.5] {
        assert_eq!(soft_threshold(x, 0.0), x);
    }
    let xs: Vec<f64> = (-400..=400).map(|i| i as f64 / 100.0).collect();
    for lam in [0.0, 0.3, 1.0, 2.5] {
        let s: Vec<f64> = xs.iter().map(|&x| soft_threshold(x, lam)).collect();
        assert!(xs.iter().zip(&s).all(|(x, v)| v.abs() <= x.abs()));
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn normalization() {
    let eye = CountDesign::from_dense(DMatrix::identity(5, 5)).unwrap();
    let z = normalize_for_theory(&eye).unwrap();
    assert_eq!(z.to_dense(), DMatrix::identity(5, 5));
    let two = CountDesign::from_dense(DMatrix::identity(4, 4) * 2.0).unwrap();
    assert_eq!(normalize_for_theory(&two).unwrap().to_dense(), DMatrix::identity(4, 4));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pois = Poisson::new(0.3).unwrap();
    let x = CountDesign::from_dense(DMatrix::from_fn(40, 25, |_, _| pois.sample(&mut rng))).unwrap();
    let xn = normalize_for_theory(&x).unwrap().to_dense();
    let ones = xn * DVector::from_element(25, 1.0);
    assert!((ones.norm_squared() - 40.0).abs() < 1e-10);
    assert!(normalize_for_theory(&CountDesign::from_dense(DMatrix::zeros(3, 2)).unwrap()).is_err());
}

#[test]
fn svd_examples() {
    let s = compact_svd(&DMatrix::identity(3, 3)).unwrap();
    assert_eq!(s.d.as_slice(), &[1.0, 1.0, 1.0]);
    let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let v = DVector::from_vec(vec![3.0, 1.0]);
    assert_eq!(compact_svd(&(&u * v.transpose())).unwrap().rank(), 1);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = DMatrix::from_fn(20, 30, |_, _| rng.random_range(-1.0..1.0));
    let s = compact_svd(&m).unwrap();
    let back = &s.u * DMatrix::from_diagonal(&s.d) * s.v.transpose();
    assert!((back - &m).norm() <= 1e-8 * m.norm());
}

#[test]
fn centering() {
    let c = centering_projection(&DVector::from_element(4, 2.5));
    assert!(c.amax() < 1e-15);
    assert_eq!(centering_projection(&DVector::from_vec(vec![1.0, 2.0, 3.0])).as_slice(), &[-1.0, 0.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v = DVector::from_fn(17, |_, _| rng.random_range(-5.0..5.0));
    let once = centering_projection(&v);
    assert!((centering_projection(&once) - &once).amax() < 1e-14);
}

#[test]
fn constraint_matrix_has_full_row_rank() {
    for seed in 0..10 {
        let p = 5 + seed as usize;
        let tree = random_tree(p, seed);
        let a = AggregationMatrix::from_tree(&tree).to_dense();
        let mut m = DMatrix::zeros(p, p + tree.node_count());
        m.view_mut((0, 0), (p, p)).fill_with_identity();
        m.view_mut((0, p), (p, tree.node_count())).copy_from(&(-a));
        assert_eq!(compact_svd(&m).unwrap().rank(), p);
    }
}

#[test]
fn projector_is_an_orthogonal_projection() {
    let tree = random_tree(9, 3);
    let a = AggregationMatrix::from_tree(&tree);
    let proj = NullspaceProjector::new(&a).unwrap();
    let dim = 9 + tree.node_count();
    let mut full = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let mut e = DVector::zeros(dim);
        e[k] = 1.0;
        full.set_column(k, &proj.apply(&e));
    }
    let eig = full.clone().symmetric_eigenvalues();
    assert!(eig.iter().all(|&l| l.abs() < 1e-8 || (l - 1.0).abs() < 1e-8));
    assert!((&full * &full - &full).amax() < 1e-10);
}

#[test]
fn projector_fixed_points_and_feasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let tree = random_tree(11, 6);
    let a = AggregationMatrix::from_tree(&tree);
    let proj = NullspaceProjector::new(&a).unwrap();
    let fast = TreeProjector::new(&tree);
    let gamma = DVector::from_fn(tree.node_count(), |_, _| rng.random_range(-1.0..1.0));
    let beta = a.mul(&gamma);
    let (b, g) = proj.apply_pair(&beta, &gamma);
    assert!((b - &beta).amax() < 1e-10 && (g - &gamma).amax() < 1e-10);

    let beta = DVector::from_fn(11, |_, _| rng.random_range(-1.0..1.0));
    let zero = DVector::zeros(tree.node_count());
    let (b, g) = proj.apply_pair(&beta, &zero);
    assert!((&b - a.mul(&g)).amax() < 1e-8);
    let (bf, gf) = fast.apply_pair(&beta, &zero);
    assert!((bf - b).amax() < 1e-10 && (gf - g).amax() < 1e-10);
}

#[test]
fn star_two_projection_by_normal_equations() {
    let tree = FeatureTree::star(2).unwrap();
    let a = AggregationMatrix::from_tree(&tree);
    let ad = a.to_dense();
    let beta = DVector::from_vec(vec![1.0, -2.0]);
    let gamma = DVector::from_vec(vec![0.5, 0.25, 3.0]);
    // argmin ||beta - A g||^2 + ||gamma - g||^2.
    let lhs = ad.transpose() * &ad + DMatrix::identity(3, 3);
    let g = lhs.lu().solve(&(ad.transpose() * &beta + &gamma)).unwrap();
    let b = &ad * &g;
    let (pb, pg) = NullspaceProjector::new(&a).unwrap().apply_pair(&beta, &gamma);
    assert!((pb - &b).amax() < 1e-12 && (pg - &g).amax() < 1e-12);
    let (fb, fg) = TreeProjector::new(&tree).apply_pair(&beta, &gamma);
    assert!((fb - b).amax() < 1e-12 && (fg - g).amax() < 1e-12);
}

#[test]
fn sparse_and_dense_designs_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pois = Poisson::new(0.2).unwrap();
    let d = DMatrix::from_fn(30, 12, |_, _| pois.sample(&mut rng));
    let dense = CountDesign::from_dense(d.clone()).unwrap();
    let sparse = CountDesign::from_sparse(CscMatrix::from_dense(&d)).unwrap();
    let b = DVector::from_fn(12, |i, _| i as f64 - 5.0);
    let r = DVector::from_fn(30, |i, _| (i as f64).sin());
    assert!((dense.mul(&b) - sparse.mul(&b)).amax() < 1e-12);
    assert!((dense.tr_mul(&r) - sparse.tr_mul(&r)).amax() < 1e-12);
    let groups = [vec![0usize, 3, 4], vec![7], vec![1, 2, 5, 6, 8, 9, 10, 11]];
    assert!((dense.aggregate(&groups) - sparse.aggregate(&groups)).amax() < 1e-12);
    assert!(CountDesign::from_dense(DMatrix::from_element(2, 2, -1.0)).is_err());
}
