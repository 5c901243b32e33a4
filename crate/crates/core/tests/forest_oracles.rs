mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flowguard_core::forest::{
    load_forest, load_forest_for_schema, load_quantized, prune, prune_with_alpha, quantize, save_forest,
    save_quantized, train, Dataset, ForestModel, ForestParams, Tree, TreeNode, DEFAULT_ALPHA_GRID,
};
use flowguard_core::Error;

#[test]
fn root_split_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..300 {
        let (rows, labels) = common::tiny_dataset(&mut rng);
        if let Err(msg) = common::root_split_agrees(&rows, &labels) {
            panic!("case {case}: {msg}\nrows {rows:?}\nlabels {labels:?}");
        }
    }
}

#[test]
fn separable_line_splits_between_classes() {
    let rows = vec![vec![0.1], vec![0.2], vec![0.8], vec![0.9]];
    let labels = [false, false, true, true];
    let params = ForestParams {
        n_trees: 1,
        max_depth: 1,
        min_samples_leaf: 1,
        bootstrap: false,
        ..ForestParams::default()
    };
    let m = train(&Dataset::new(&rows, &labels).unwrap(), &params, 1).unwrap();
    let TreeNode::Split { threshold, .. } = m.trees[0].nodes[0] else {
        panic!("expected a split");
    };
    assert!(threshold > 0.2 && threshold < 0.8);
}

/// Independent recursive walk over the preorder layout.
fn walk(t: &Tree, i: usize, x: &[f64]) -> f64 {
    match &t.nodes[i] {
        TreeNode::Leaf { counts } => counts[1] as f64 / (counts[0] + counts[1]) as f64,
        TreeNode::Split { feature, threshold, right } => {
            if x[*feature] <= *threshold {
                walk(t, i + 1, x)
            } else {
                walk(t, *right, x)
            }
        }
    }
}

#[test]
fn five_tree_forest_traced_by_hand() {
    // xor-like pattern with a noisy corner, scripted by hand
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..8 {
        for j in 0..8 {
            let (x, y) = (i as f64, j as f64);
            rows.push(vec![x, y]);
            labels.push((i < 4) != (j < 4) || (i == 7 && j == 7));
        }
    }
    let params = ForestParams {
        n_trees: 5,
        max_depth: 4,
        min_samples_leaf: 3,
        ..ForestParams::default()
    };
    let m = train(&Dataset::new(&rows, &labels).unwrap(), &params, 11).unwrap();
    assert_eq!(m.trees.len(), 5);
    for probe in [[3.5, 4.5], [6.2, 6.9], [0.0, 7.0], [2.5, 2.5]] {
        let hand: f64 = m.trees.iter().map(|t| walk(t, 0, &probe)).sum::<f64>() / 5.0;
        assert!((m.predict_proba(&probe).unwrap() - hand).abs() < 1e-15, "{probe:?}");
    }

    // and a fully scripted two-split tree beside two stumps
    let scripted = ForestModel {
        trees: vec![
            Tree {
                nodes: vec![
                    TreeNode::Split { feature: 0, threshold: 1.0, right: 4 },
                    TreeNode::Split { feature: 1, threshold: 0.0, right: 3 },
                    TreeNode::Leaf { counts: [3, 1] },
                    TreeNode::Leaf { counts: [1, 4] },
                    TreeNode::Leaf { counts: [0, 6] },
                ],
            },
            Tree::leaf([2, 2]),
            Tree::leaf([9, 0]),
        ],
        ..m
    };
    // x = (0.5, 2): first tree goes left then right, leaf [1, 4] -> 0.8
    let p = scripted.predict_proba(&[0.5, 2.0]).unwrap();
    assert!((p - (0.8 + 0.5 + 0.0) / 3.0).abs() < 1e-15);
}

fn noisy(n: usize, seed: u64) -> Dataset {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        let clean = x + 0.3 * y > 0.6;
        rows.push(vec![x, y]);
        labels.push(if rng.random_bool(0.2) { !clean } else { clean });
    }
    Dataset::new(&rows, &labels).unwrap()
}

fn accuracy(m: &ForestModel, d: &Dataset) -> f64 {
    let ok = (0..d.len()).filter(|&i| m.predict(d.row(i), 0.5).unwrap() == d.label(i)).count();
    ok as f64 / d.len() as f64
}

#[test]
fn pruning_overfit_tree() {
    let train_set = noisy(200, 1);
    let validation = noisy(200, 2);
    let params = ForestParams {
        n_trees: 1,
        min_samples_leaf: 1,
        bootstrap: false,
        ..ForestParams::default()
    };
    let full = train(&train_set, &params, 3).unwrap();
    let pruned = prune(&full, &validation, &DEFAULT_ALPHA_GRID).unwrap();
    assert!(pruned.node_count() < full.node_count(), "{} vs {}", pruned.node_count(), full.node_count());
    assert!(accuracy(&pruned, &validation) >= accuracy(&full, &validation) - 0.02);

    let mut last = usize::MAX;
    for alpha in [0.0, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 1.0] {
        let n = prune_with_alpha(&full, alpha).node_count();
        assert!(n <= last, "node count rose at alpha {alpha}");
        last = n;
    }
    assert_eq!(prune_with_alpha(&full, 0.0), full);
    assert_eq!(prune(&full, &validation, &[0.0]).unwrap(), full);
    assert!(matches!(
        prune(&full, &Dataset::new(&[], &[]).unwrap(), &DEFAULT_ALPHA_GRID),
        Err(Error::EmptyValidation)
    ));
}

#[test]
fn default_model_quantizes_small_and_faithful() {
    let split = common::default_split();
    let model = common::pruned_forest(&split.train, &split.validation);
    let q = quantize(&model).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let fp = dir.path().join("forest.bin");
    let qp = dir.path().join("forest.q.bin");
    save_forest(&model, &fp).unwrap();
    save_quantized(&q, &qp).unwrap();
    let float_size = std::fs::metadata(&fp).unwrap().len() as f64;
    let q_size = std::fs::metadata(&qp).unwrap().len() as f64;
    assert!(q_size <= 0.7 * float_size, "{q_size} vs {float_size}");

    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut agree = 0;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..model.n_features)
            .map(|f| rng.random_range(model.feature_min[f]..=model.feature_max[f]))
            .collect();
        if model.predict(&x, 0.5).unwrap() == (q.predict_quantized(&x).unwrap() >= 0.5) {
            agree += 1;
        }
    }
    assert!(agree >= 9_900, "{agree}/10000");

    // round trips are byte-exact
    let again = dir.path().join("again.bin");
    save_forest(&load_forest(&fp).unwrap(), &again).unwrap();
    assert_eq!(std::fs::read(&fp).unwrap(), std::fs::read(&again).unwrap());
    save_quantized(&load_quantized(&qp).unwrap(), &again).unwrap();
    assert_eq!(std::fs::read(&qp).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn damaged_and_foreign_files_are_refused() {
    let params = ForestParams { n_trees: 3, ..ForestParams::default() };
    let d = noisy(100, 4);
    let m = train(&d, &params, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.bin");
    save_forest(&m, &p).unwrap();
    let bytes = std::fs::read(&p).unwrap();

    for cut in [0, 3, 12, bytes.len() / 2, bytes.len() - 1] {
        std::fs::write(&p, &bytes[..cut]).unwrap();
        assert!(matches!(load_forest(&p), Err(Error::CorruptModel(_))), "cut at {cut}");
    }
    std::fs::write(&p, &bytes).unwrap();
    assert!(matches!(
        load_forest_for_schema(&p, 2),
        Err(Error::VersionMismatch { what: "feature schema", expected: 2, found: 1 })
    ));
    assert!(matches!(load_quantized(&p), Err(Error::CorruptModel(_))));
}

#[test]
fn same_seed_same_bytes() {
    let d = noisy(150, 8);
    let params = ForestParams { n_trees: 12, ..ForestParams::default() };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    save_forest(&train(&d, &params, 21).unwrap(), &a).unwrap();
    save_forest(&train(&d, &params, 21).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}
