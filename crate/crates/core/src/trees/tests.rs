use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::seed;

fn uniform_sample(n: usize, d: usize, seed_value: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed_value);
    Array2::from_shape_fn((n, d), |_| rng.random::<f64>())
}

fn one_dim(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap()
}

#[test]
fn randomized_single_point_is_single_leaf() {
    let x = array![[0.3, 0.7]];
    let structure = build_randomized_structure(
        x.view(),
        &StructureConstraints::new(1, 10),
        &mut seed::rng(1),
    )
    .unwrap();
    assert_eq!(structure.leaf_count(), 1);
    assert_eq!(structure.cell(0), &Cell::unit(2));
}

#[test]
fn randomized_floor_equal_to_n_is_single_leaf() {
    let x = uniform_sample(20, 3, 2);
    let structure = build_randomized_structure(
        x.view(),
        &StructureConstraints::new(20, 10),
        &mut seed::rng(2),
    )
    .unwrap();
    assert_eq!(structure.leaf_count(), 1);
}

#[test]
fn randomized_floor_above_n_is_config_error() {
    let x = uniform_sample(5, 2, 3);
    let err = build_randomized_structure(
        x.view(),
        &StructureConstraints::new(6, 4),
        &mut seed::rng(3),
    );
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn randomized_leaves_respect_floor() {
    let x = uniform_sample(100, 2, 4);
    let constraints = StructureConstraints::new(10, 8);
    for s in 0..20 {
        let structure =
            build_randomized_structure(x.view(), &constraints, &mut seed::rng(s)).unwrap();
        let mut counts = vec![0; structure.leaf_count()];
        for row in x.outer_iter() {
            let p = row.to_vec();
            let hits: Vec<_> = (0..structure.leaf_count())
                .filter(|&l| structure.cell(l).contains(&p))
                .collect();
            assert_eq!(hits.len(), 1);
            counts[hits[0]] += 1;
        }
        assert!(counts.iter().all(|&c| c >= 10), "{counts:?}");
        assert!(structure.leaf_count() > 1);
        assert!(structure.depth() <= 8);
    }
}

#[test]
fn randomized_rejects_points_outside_cube() {
    let x = array![[0.2, 1.5]];
    let err = build_randomized_structure(
        x.view(),
        &StructureConstraints::new(1, 3),
        &mut seed::rng(0),
    );
    assert!(matches!(err, Err(Error::Domain { coordinate: 1, .. })));
}

#[test]
fn diameter_cap_stops_splitting() {
    let x = uniform_sample(500, 2, 5);
    let constraints = StructureConstraints::new(1, 30).with_max_leaf_diameter(0.3);
    let structure = build_randomized_structure(x.view(), &constraints, &mut seed::rng(5)).unwrap();
    let report = structure.constraint_report(x.view(), &constraints);
    // Oversized leaves are reported, and only sparse leaves can be oversized:
    // a cell holding many points always finds a legal cut.
    let mut counts = vec![0usize; structure.leaf_count()];
    for row in x.outer_iter() {
        counts[structure.leaf_of(row.as_slice().unwrap()).unwrap()] += 1;
    }
    let oversized: Vec<usize> = (0..structure.leaf_count())
        .filter(|&l| structure.cell(l).diameter() > 0.3)
        .collect();
    assert_eq!(report.diameter_violations, oversized.len());
    assert!(oversized.iter().all(|&l| counts[l] < 20));
    let dense = StructureConstraints::new(1, 30).with_max_leaf_diameter(1.2);
    let coarse = build_randomized_structure(x.view(), &dense, &mut seed::rng(6)).unwrap();
    assert_eq!(
        coarse
            .constraint_report(x.view(), &dense)
            .diameter_violations,
        0
    );
}

#[test]
fn greedy_zero_gradient_is_single_leaf() {
    let x = uniform_sample(30, 2, 6);
    let z = vec![0.0; 30];
    let structure = build_greedy_structure(
        x.view(),
        &z,
        &StructureConstraints::new(2, 5),
        &Subsample::full(30),
    )
    .unwrap();
    assert_eq!(structure.leaf_count(), 1);
}

/// Impurity of every legal cut of the sorted 1-d sample, by direct sums.
fn enumerate_cuts(z: &[f64], k: usize) -> Vec<(usize, f64)> {
    let sse = |part: &[f64]| {
        let mean = part.iter().sum::<f64>() / part.len() as f64;
        part.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    };
    (1..z.len())
        .filter(|&p| p >= k && z.len() - p >= k)
        .map(|p| (p, sse(&z[..p]) + sse(&z[p..])))
        .collect()
}

#[test]
fn greedy_finds_middle_cut() {
    let x = one_dim(&[0.1, 0.2, 0.8, 0.9]);
    let z = [1.0, 1.0, 5.0, 5.0];
    let cuts = enumerate_cuts(&z, 1);
    assert_eq!(cuts.len(), 3);
    let best = cuts.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, 2);
    assert_eq!(best.1, 0.0);

    let structure = build_greedy_structure(
        x.view(),
        &z,
        &StructureConstraints::new(2, 5),
        &Subsample::full(4),
    )
    .unwrap();
    assert_eq!(structure.leaf_count(), 2);
    match structure.nodes()[0] {
        Node::Split {
            feature, threshold, ..
        } => {
            assert_eq!(feature, 0);
            assert!(threshold > 0.2 && threshold < 0.8);
        }
        _ => panic!("expected a split at the root"),
    }
    let left = structure.leaf_of(&[0.15]).unwrap();
    let right = structure.leaf_of(&[0.85]).unwrap();
    assert_ne!(left, right);
    assert_eq!(structure.leaf_of(&[0.2]).unwrap(), left);
    assert_eq!(structure.leaf_of(&[0.8]).unwrap(), right);
}

#[test]
fn greedy_floor_forbids_all_cuts() {
    let x = one_dim(&[0.1, 0.2, 0.8, 0.9]);
    let z = [1.0, 1.0, 5.0, 5.0];
    assert!(enumerate_cuts(&z, 3).is_empty());
    let structure = build_greedy_structure(
        x.view(),
        &z,
        &StructureConstraints::new(3, 5),
        &Subsample::full(4),
    )
    .unwrap();
    assert_eq!(structure.leaf_count(), 1);
}

#[test]
fn greedy_ties_prefer_lowest_feature() {
    // Both features order the points identically, so both offer the same cut.
    let x = array![[0.1, 0.1], [0.2, 0.2], [0.8, 0.8], [0.9, 0.9]];
    let z = [0.0, 0.0, 1.0, 1.0];
    let structure = build_greedy_structure(
        x.view(),
        &z,
        &StructureConstraints::new(1, 1),
        &Subsample::full(4),
    )
    .unwrap();
    assert!(matches!(
        structure.nodes()[0],
        Node::Split { feature: 0, .. }
    ));
}

#[test]
fn greedy_uses_only_subsample_members() {
    // Outside the subsample the gradient would suggest a different cut.
    let x = one_dim(&[0.1, 0.2, 0.3, 0.6, 0.7, 0.9]);
    let z = [0.0, 9.0, 0.0, 5.0, 5.0, 5.0];
    let w = Subsample::from_indices(6, vec![0, 2, 3, 4]).unwrap();
    let structure =
        build_greedy_structure(x.view(), &z, &StructureConstraints::new(2, 1), &w).unwrap();
    match structure.nodes()[0] {
        Node::Split { threshold, .. } => assert_abs_diff_eq!(threshold, 0.45, epsilon = 1e-12),
        _ => panic!("expected split"),
    }
}

#[test]
fn leaf_value_is_mean_over_full_sample() {
    let x = one_dim(&[0.1, 0.5, 0.9]);
    let tree = assign_leaf_values(
        TreeStructure::single_leaf(1),
        &[1.0, 2.0, 3.0],
        x.view(),
        Subsample::full(3),
    )
    .unwrap();
    assert_eq!(tree.leaf_values(), &[2.0]);
    assert_eq!(tree.predict(&[0.0]).unwrap(), 2.0);
    assert_eq!(tree.predict(&[1.0]).unwrap(), 2.0);
}

fn two_leaf_sample() -> (TreeStructure, Array2<f64>) {
    let structure = TreeStructure::single_leaf(1).split(0, 0, 0.5).unwrap();
    (structure, one_dim(&[0.1, 0.2, 0.7, 0.8]))
}

#[test]
fn empty_leaf_takes_zero() {
    let (structure, x) = two_leaf_sample();
    let w = Subsample::from_indices(4, vec![2, 3]).unwrap();
    let tree = assign_leaf_values(structure, &[7.0, 8.0, 1.0, 3.0], x.view(), w).unwrap();
    assert_eq!(tree.predict(&[0.15]).unwrap(), 0.0);
    assert_eq!(tree.predict(&[0.75]).unwrap(), 2.0);
}

#[test]
fn leaf_value_averages_subsample_members_only() {
    let x = one_dim(&[0.1, 0.2, 0.3]);
    let w = Subsample::from_indices(3, vec![0, 2]).unwrap();
    let tree = assign_leaf_values(
        TreeStructure::single_leaf(1),
        &[2.0, 100.0, 4.0],
        x.view(),
        w,
    )
    .unwrap();
    assert_eq!(tree.leaf_values(), &[3.0]);
}

#[test]
fn boundary_goes_right() {
    let structure = TreeStructure::single_leaf(2).split(0, 0, 0.5).unwrap();
    assert_eq!(structure.leaf_of(&[0.5, 0.3]).unwrap(), 1);
    assert_eq!(structure.leaf_of(&[0.4999, 0.3]).unwrap(), 0);
    assert_eq!(structure.leaf_of(&[1.0, 1.0]).unwrap(), 1);
    assert_eq!(structure.leaf_of(&[0.0, 0.0]).unwrap(), 0);
}

#[test]
fn leaf_of_rejects_outside_points() {
    let structure = TreeStructure::single_leaf(2);
    assert!(matches!(
        structure.leaf_of(&[-0.1, 0.5]),
        Err(Error::Domain { coordinate: 0, .. })
    ));
    assert!(matches!(
        structure.leaf_of(&[0.5, 1.01]),
        Err(Error::Domain { coordinate: 1, .. })
    ));
    assert!(matches!(
        structure.leaf_of(&[0.5]),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn depth_three_corners_hit_eight_leaves() {
    // Halve along x0, then each half along x1, then each quarter along x2.
    let mut s = TreeStructure::single_leaf(3).split(0, 0, 0.5).unwrap();
    s = s.split(0, 1, 0.5).unwrap().split(1, 1, 0.5).unwrap();
    for leaf in 0..4 {
        s = s.split(leaf, 2, 0.5).unwrap();
    }
    assert_eq!(s.depth(), 3);
    let mut leaves = Vec::new();
    for corner in 0..8u32 {
        let p: Vec<f64> = (0..3).map(|j| ((corner >> j) & 1) as f64).collect();
        let leaf = s.leaf_of(&p).unwrap();
        assert!(s.cell(leaf).contains(&p));
        leaves.push(leaf);
    }
    leaves.sort_unstable();
    leaves.dedup();
    assert_eq!(leaves.len(), 8);
}

#[test]
fn structure_vector_examples() {
    let x = one_dim(&[0.1, 0.4, 0.6]);
    let sv = structure_vector(
        &TreeStructure::single_leaf(1),
        x.view(),
        &Subsample::full(3),
        &[0.9],
    )
    .unwrap();
    for w in sv.to_dense() {
        assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
    }

    let (structure, x) = two_leaf_sample();
    let w = Subsample::from_indices(4, vec![0, 2]).unwrap();
    let sv = structure_vector(&structure, x.view(), &w, &[0.3]).unwrap();
    assert_eq!(sv.to_dense(), vec![1.0, 0.0, 0.0, 0.0]);

    let w = Subsample::from_indices(4, vec![2, 3]).unwrap();
    let sv = structure_vector(&structure, x.view(), &w, &[0.3]).unwrap();
    assert_eq!(sv.to_dense(), vec![0.0; 4]);
    assert_eq!(sv.sum(), 0.0);
}

#[test]
fn from_parts_rejects_inconsistent_cells() {
    let s = TreeStructure::single_leaf(1).split(0, 0, 0.5).unwrap();
    let mut cells = s.cells().to_vec();
    cells.swap(0, 1);
    assert!(TreeStructure::from_parts(1, s.nodes().to_vec(), cells).is_err());
    assert!(TreeStructure::from_parts(1, s.nodes().to_vec(), s.cells().to_vec()).is_ok());
}

#[test]
fn subsample_validation() {
    assert!(Subsample::from_indices(3, vec![0, 0]).is_err());
    assert!(Subsample::from_indices(3, vec![3]).is_err());
    let w = Subsample::draw(10, 4, &mut seed::rng(9));
    assert_eq!(w.len(), 4);
    assert!(w.indices().windows(2).all(|p| p[0] < p[1]));
    assert_eq!(Subsample::size_for(10, 0.35), 4);
    assert_eq!(Subsample::size_for(200, 0.8), 160);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn randomized_cells_partition_the_cube(s in 0u64..1000, d in 1usize..4, k in 1usize..8) {
        let x = uniform_sample(60, d, s);
        let structure = build_randomized_structure(x.view(), &StructureConstraints::new(k, 6), &mut seed::rng(s)).unwrap();
        let volume: f64 = structure.cells().iter().map(Cell::volume).sum();
        prop_assert!((volume - 1.0).abs() < 1e-9);
        let mut rng = seed::rng(s + 17);
        for _ in 0..2000 {
            let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let inside = structure.cells().iter().filter(|c| c.contains(&p)).count();
            prop_assert_eq!(inside, 1);
            prop_assert!(structure.cell(structure.leaf_of(&p).unwrap()).contains(&p));
        }
        let report = structure.constraint_report(x.view(), &StructureConstraints::new(k, 6));
        prop_assert!(report.min_leaf_count >= k);
    }

    #[test]
    fn leaf_values_are_linear(s in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let n = 40;
        let x = uniform_sample(n, 2, s);
        let mut rng = seed::rng(s);
        let structure = build_randomized_structure(x.view(), &StructureConstraints::new(3, 5), &mut rng).unwrap();
        let w = Subsample::draw(n, 25, &mut rng);
        let z1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(u, v)| a * u + b * v).collect();
        let t1 = assign_leaf_values(structure.clone(), &z1, x.view(), w.clone()).unwrap();
        let t2 = assign_leaf_values(structure.clone(), &z2, x.view(), w.clone()).unwrap();
        let tm = assign_leaf_values(structure, &mix, x.view(), w).unwrap();
        for leaf in 0..tm.leaf_values().len() {
            let expect = a * t1.leaf_value(leaf) + b * t2.leaf_value(leaf);
            prop_assert!((tm.leaf_value(leaf) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_matches_structure_vector(s in 0u64..1000, greedy in any::<bool>()) {
        let n = 50;
        let x = uniform_sample(n, 3, s);
        let mut rng = seed::rng(s);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w = Subsample::draw(n, 30, &mut rng);
        let constraints = StructureConstraints::new(4, 6);
        let structure = if greedy {
            build_greedy_structure(x.view(), &z, &constraints, &w).unwrap()
        } else {
            build_randomized_structure(x.view(), &constraints, &mut rng).unwrap()
        };
        let tree = assign_leaf_values(structure.clone(), &z, x.view(), w.clone()).unwrap();
        for _ in 0..100 {
            let p: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let direct = structure_vector(&structure, x.view(), &w, &p).unwrap();
            let cached = tree.structure_vector(&p).unwrap();
            prop_assert_eq!(&direct, &cached);
            prop_assert!((tree.predict(&p).unwrap() - direct.dot(&z)).abs() < 1e-12);
            prop_assert!(direct.entries().iter().all(|&(_, v)| v > 0.0));
            let sum = direct.sum();
            prop_assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-12);
        }
    }
}
