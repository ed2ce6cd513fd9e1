use std::collections::BTreeMap;

use mshift::lattice::MultiIndex;
use mshift::linalg::{self, c64, CMatrix};
use mshift::sampling;
use mshift::tree::{self, Decomposition, ExplicitWeights, FactorWeights, RootedTree, TreeInputDoc, TreeProduct, TreeShift};
use num_complex::Complex64;

fn random_factor_weights(product: &TreeProduct, seed: u64) -> FactorWeights {
    let mut rng = sampling::rng(seed, 0);
    FactorWeights {
        per_tree: product
            .trees
            .iter()
            .map(|t| {
                (0..t.len())
                    .map(|_| c64(1.0 + sampling::normal(&mut rng).abs(), sampling::normal(&mut rng)))
                    .collect()
            })
            .collect(),
    }
}

#[test]
fn product_embedding_commutes() {
    let product = TreeProduct::new(vec![RootedTree::chain(4), RootedTree::binary(3)]).unwrap();
    let weights = random_factor_weights(&product, 1);
    let e = tree::embed(&product, &weights, 3).unwrap();
    assert!(e.family.check_commuting(1e-12).commuting);
    assert_eq!(e.intertwining_residual, 0.0);
    // V_(0,k) holds the 2^k binary vertices at depth k.
    assert_eq!(e.family.fiber_dim(&MultiIndex::new(vec![0, 3])), 8);
    assert_eq!(e.family.fiber_dim(&MultiIndex::new(vec![2, 1])), 2);
}

#[test]
fn chain_product_is_the_scalar_shift() {
    let product = TreeProduct::new(vec![RootedTree::chain(4), RootedTree::chain(4)]).unwrap();
    let e = tree::embed(&product, &product.unit_weights(), 3).unwrap();
    assert_eq!(e.family.constant_fiber(), Some(1));
    for j in 0..2 {
        assert!(e.family.weights_on_axis(j).iter().all(|w| *w == linalg::identity(1)));
    }
}

#[test]
fn shallow_trees_raise_a_box_error() {
    let product = TreeProduct::new(vec![RootedTree::chain(2), RootedTree::binary(1)]).unwrap();
    assert!(matches!(
        tree::embed(&product, &product.unit_weights(), 2),
        Err(mshift::Error::Box(_))
    ));
}

#[test]
fn explicit_overrides_can_break_commutativity() {
    let product = TreeProduct::new(vec![RootedTree::chain(3), RootedTree::chain(3)]).unwrap();
    let mut overrides = BTreeMap::new();
    overrides.insert((0, vec![1, 1]), c64(3.0, 0.0));
    let weights = ExplicitWeights {
        base: product.unit_weights(),
        overrides,
    };
    let e = tree::embed(&product, &weights, 2).unwrap();
    assert_eq!(e.intertwining_residual, 0.0);
    assert!(!e.family.check_commuting(1e-12).commuting);
}

#[test]
fn tree_document_builds_the_product() {
    let text = r#"{"degree_cap": 2, "trees": [
        {"parent": [null, 0, 1], "weights": [{"v": 1, "value": [2.0, 0.0]}]},
        {"parent": [null, 0, 0, 1]}
    ]}"#;
    let doc: TreeInputDoc = mshift::json::parse(text).unwrap();
    let (product, weights) = doc.build().unwrap();
    assert_eq!(product.dim(), 2);
    let e = tree::embed(&product, &weights, doc.degree_cap).unwrap();
    let w = e.family.weight(0, &MultiIndex::zero(2));
    assert_eq!(w[(0, 0)], c64(2.0, 0.0));
    assert_eq!(e.family.fiber_dim(&MultiIndex::new(vec![0, 1])), 2);
}

fn sample_forest() -> Vec<TreeShift> {
    vec![
        TreeShift {
            parent: vec![None, Some(0), Some(0), Some(1)],
            weights: vec![None, Some(c64(1.0, 0.5)), Some(c64(-2.0, 0.0)), Some(c64(0.5, 0.5))],
            labels: vec![(0, 0), (1, 0), (1, 1), (2, 0)],
        },
        TreeShift {
            parent: vec![None, Some(0), Some(1)],
            weights: vec![None, Some(c64(0.7, 0.0)), Some(c64(0.0, 1.3))],
            labels: vec![(0, 1), (1, 2), (2, 1)],
        },
    ]
}

#[test]
fn decomposition_recovers_a_hidden_forest() {
    let (plain, labels) = tree::forest_to_family(&sample_forest(), 2).unwrap();
    assert_eq!(labels[1], vec![(1, 0), (1, 1), (1, 2)]);
    let mut rng = sampling::rng(5, 0);
    let qs: Vec<CMatrix> = plain.fiber_dims().iter().map(|&n| sampling::random_unitary(&mut rng, n)).collect();
    let hidden = plain
        .map_weights(|_, a, m| &qs[a.get(0) + 1] * m * qs[a.get(0)].adjoint())
        .unwrap();
    let partition = vec![vec![vec![0, 1], vec![2]], vec![vec![0], vec![], vec![1]]];
    match tree::decompose_unilateral(&hidden, &qs, &partition, 1e-10, 1e-12).unwrap() {
        Decomposition::Forest {
            trees,
            intertwining_residual,
            leaves,
        } => {
            assert_eq!(trees.len(), 2);
            assert_eq!(leaves, 1);
            assert!(intertwining_residual < 1e-12);
            assert!(tree::round_trip_residual(&hidden, &qs, &trees).unwrap() < 1e-12);
            let mags: Vec<f64> = trees[0].weights.iter().flatten().map(|w: &Complex64| w.norm()).collect();
            let expected: Vec<f64> = sample_forest()[0].weights.iter().flatten().map(|w| w.norm()).collect();
            for (a, b) in mags.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        Decomposition::NotApplicable { reason, .. } => panic!("{reason}"),
    }
}

#[test]
fn decomposition_rejects_a_mixing_shift() {
    // A_0 e_1 has components along both basis vectors of level 1, but the
    // partition gives it only the first.
    let (plain, _) = tree::forest_to_family(&sample_forest(), 2).unwrap();
    let s = 1.0 / 2f64.sqrt();
    let rot = CMatrix::from_row_slice(
        3,
        3,
        &[c64(s, 0.0), c64(-s, 0.0), c64(0.0, 0.0), c64(s, 0.0), c64(s, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)],
    );
    let mixed = plain
        .map_weights(|_, a, m| if a.get(0) == 0 { &rot * m } else { m * rot.adjoint() })
        .unwrap();
    let bases: Vec<CMatrix> = plain.fiber_dims().iter().map(|&n| linalg::identity(n)).collect();
    let partition = vec![vec![vec![0], vec![1, 2]], vec![vec![0], vec![], vec![1]]];
    match tree::decompose_unilateral(&mixed, &bases, &partition, 1e-10, 1e-12).unwrap() {
        Decomposition::NotApplicable { level, .. } => assert_eq!(level, 0),
        Decomposition::Forest { .. } => panic!("expected not applicable"),
    }
}

#[test]
fn decomposition_requires_a_cover() {
    let (plain, _) = tree::forest_to_family(&sample_forest(), 2).unwrap();
    let bases: Vec<CMatrix> = plain.fiber_dims().iter().map(|&n| linalg::identity(n)).collect();
    let partition = vec![vec![vec![0], vec![2]], vec![vec![0], vec![], vec![1]]];
    assert!(matches!(
        tree::decompose_unilateral(&plain, &bases, &partition, 1e-10, 1e-12).unwrap(),
        Decomposition::NotApplicable { .. }
    ));
}

#[test]
fn decomposition_is_one_variable_only() {
    let product = TreeProduct::new(vec![RootedTree::chain(3), RootedTree::chain(3)]).unwrap();
    let e = tree::embed(&product, &product.unit_weights(), 2).unwrap();
    assert!(tree::decompose_unilateral(&e.family, &[], &[], 1e-10, 1e-12).is_err());
}
