//! TreeSHAP against exhaustive Shapley enumeration.

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepsis_core::explain::tree_shap;
use sepsis_core::learners::{ModelKind, Node, Split, Tree, TrainedModel};

/// Expected tree output when only features in `subset` are known: unknown
/// splits average their children by cover.
fn conditional_value(tree: &Tree, node: usize, x: &[f64], subset: u32) -> f64 {
    let n = &tree.nodes()[node];
    match n.split {
        None => n.value,
        Some(s) if subset & (1 << s.feature) != 0 => {
            let next = if x[s.feature] <= s.threshold { s.left } else { s.right };
            conditional_value(tree, next, x, subset)
        }
        Some(s) => {
            let (l, r) = (&tree.nodes()[s.left], &tree.nodes()[s.right]);
            (l.cover * conditional_value(tree, s.left, x, subset) + r.cover * conditional_value(tree, s.right, x, subset))
                / n.cover
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn brute_shapley(trees: &[Tree], scale: f64, x: &[f64], d: usize) -> Vec<f64> {
    let v = |s: u32| scale * trees.iter().map(|t| conditional_value(t, 0, x, s)).sum::<f64>();
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0u32..(1 << d) {
            if s & (1 << i) != 0 {
                continue;
            }
            let k = s.count_ones() as usize;
            let w = factorial(k) * factorial(d - k - 1) / factorial(d);
            *p += w * (v(s | (1 << i)) - v(s));
        }
    }
    phi
}

/// Random tree of depth <= `max_depth` whose internal covers are the sums of
/// their children's.
fn random_tree(rng: &mut ChaCha8Rng, d: usize, max_depth: usize) -> Tree {
    fn build(rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>, d: usize, depth: usize, max_depth: usize) -> usize {
        let idx = nodes.len();
        nodes.push(Node::leaf(0.0, 1.0));
        if depth < max_depth && (depth == 0 || rng.random_bool(0.7)) {
            let feature = rng.random_range(0..d);
            let threshold = rng.random_range(-1.0..1.0);
            let left = build(rng, nodes, d, depth + 1, max_depth);
            let right = build(rng, nodes, d, depth + 1, max_depth);
            nodes[idx].cover = nodes[left].cover + nodes[right].cover;
            nodes[idx].split = Some(Split {
                feature,
                threshold,
                left,
                right,
                gain: 1.0,
            });
        } else {
            nodes[idx] = Node::leaf(rng.random_range(-2.0..2.0), rng.random_range(1..20) as f64);
        }
        idx
    }
    let mut nodes = Vec::new();
    build(rng, &mut nodes, d, 0, max_depth);
    Tree::from_nodes(nodes).unwrap()
}

fn check_ensemble(seed: u64, kind: ModelKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=8);
    let n_trees = rng.random_range(1..=3);
    let trees: Vec<Tree> = (0..n_trees).map(|_| random_tree(&mut rng, d, 3)).collect();
    let init = rng.random_range(-1.0..1.0);
    let names = (0..d).map(|j| format!("f{j}")).collect();
    let model = TrainedModel::from_trees(kind, trees.clone(), init, names).unwrap();
    let x = Array2::from_shape_fn((8, d), |_| rng.random_range(-1.5..1.5));
    let shap = tree_shap(&model, x.view()).unwrap();
    let raw = model.predict_raw(x.view()).unwrap();
    let scale = if kind == ModelKind::RandomForest { 1.0 / n_trees as f64 } else { 1.0 };
    for (i, row) in x.outer_iter().enumerate() {
        let oracle = brute_shapley(&trees, scale, row.as_slice().unwrap(), d);
        for j in 0..d {
            assert!(
                (shap.values[[i, j]] - oracle[j]).abs() <= 1e-9,
                "seed {seed} row {i} feature {j}: {} vs {}",
                shap.values[[i, j]],
                oracle[j]
            );
            if !trees.iter().any(|t| t.uses_feature(j)) {
                assert_eq!(shap.values[[i, j]], 0.0);
            }
        }
        let total = shap.base_value + shap.values.row(i).sum();
        assert!((total - raw[i]).abs() <= 1e-9);
    }
}

#[test]
fn boosted_ensembles_match_enumeration() {
    for seed in 0..100 {
        check_ensemble(seed, ModelKind::GradientBoosting);
    }
}

#[test]
fn forest_ensembles_match_enumeration() {
    for seed in 100..200 {
        check_ensemble(seed, ModelKind::RandomForest);
    }
}

#[test]
fn ensemble_attribution_is_sum_of_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (t1, t2) = (random_tree(&mut rng, 4, 3), random_tree(&mut rng, 4, 3));
    let names: Vec<String> = (0..4).map(|j| format!("f{j}")).collect();
    let x = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.5..1.5));
    let kind = ModelKind::GradientBoosting;
    let both = TrainedModel::from_trees(kind, vec![t1.clone(), t2.clone()], 0.0, names.clone()).unwrap();
    let a = TrainedModel::from_trees(kind, vec![t1], 0.0, names.clone()).unwrap();
    let b = TrainedModel::from_trees(kind, vec![t2], 0.0, names).unwrap();
    let sum = tree_shap(&a, x.view()).unwrap().values + tree_shap(&b, x.view()).unwrap().values;
    let joint = tree_shap(&both, x.view()).unwrap().values;
    assert!(joint.iter().zip(&sum).all(|(p, q)| (p - q).abs() < 1e-12));
}

#[test]
fn interchangeable_features_get_equal_credit() {
    // f0 then f1 on one side, f1 then f0 on the other, mirrored values
    let split = |feature, left, right, cover| Node {
        cover,
        value: 0.0,
        split: Some(Split {
            feature,
            threshold: 0.0,
            left,
            right,
            gain: 1.0,
        }),
    };
    let t1 = Tree::from_nodes(vec![
        split(0, 1, 2, 8.0),
        Node::leaf(0.0, 4.0),
        split(1, 3, 4, 4.0),
        Node::leaf(0.0, 2.0),
        Node::leaf(1.0, 2.0),
    ])
    .unwrap();
    let t2 = Tree::from_nodes(vec![
        split(1, 1, 2, 8.0),
        Node::leaf(0.0, 4.0),
        split(0, 3, 4, 4.0),
        Node::leaf(0.0, 2.0),
        Node::leaf(1.0, 2.0),
    ])
    .unwrap();
    let model =
        TrainedModel::from_trees(ModelKind::GradientBoosting, vec![t1, t2], 0.0, vec!["a".into(), "b".into()]).unwrap();
    let x = ndarray::array![[1.0, 1.0], [-1.0, -1.0]];
    let shap = tree_shap(&model, x.view()).unwrap();
    for row in shap.values.outer_iter() {
        assert!((row[0] - row[1]).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn efficiency_holds_on_random_ensembles(seed in any::<u64>()) {
        check_ensemble(seed, ModelKind::HistGradientBoosting);
    }
}
