//! Helpers shared by the integration test binaries.
#![allow(dead_code)]

use flowguard_core::autoenc::{ae_train, AEModel, AETrainConfig};
use flowguard_core::features::{extract, normalize_apply, normalize_fit, SplitPart, TimeSplit, WindowConfig};
use flowguard_core::forest::{prune, train, Dataset, ForestModel, ForestParams, DEFAULT_ALPHA_GRID};
use flowguard_core::synthgen::{generate, ScenarioConfig};
use flowguard_core::FeatureVector;

pub struct Split {
    pub all: Vec<FeatureVector>,
    pub train: Vec<FeatureVector>,
    pub validation: Vec<FeatureVector>,
    pub test: Vec<FeatureVector>,
}

pub fn scenario_vectors(cfg: &ScenarioConfig) -> Vec<FeatureVector> {
    let trace = generate(cfg).expect("scenario generates");
    extract(&trace.flows, &trace.telemetry, &WindowConfig::default()).expect("extraction succeeds")
}

pub fn split(all: Vec<FeatureVector>) -> Split {
    let s = TimeSplit::default();
    Split {
        train: s.select(&all, SplitPart::Train),
        validation: s.select(&all, SplitPart::Validation),
        test: s.select(&all, SplitPart::Test),
        all,
    }
}

pub fn default_split() -> Split {
    split(scenario_vectors(&ScenarioConfig::default()))
}

/// Default forest trained on `train` and pruned on `validation`.
pub fn pruned_forest(train_set: &[FeatureVector], validation: &[FeatureVector]) -> ForestModel {
    let raw = train(
        &Dataset::from_vectors(train_set).unwrap(),
        &ForestParams::default(),
        42,
    )
    .unwrap();
    prune(&raw, &Dataset::from_vectors(validation).unwrap(), &DEFAULT_ALPHA_GRID).unwrap()
}

pub fn benign_only(vectors: &[FeatureVector]) -> Vec<FeatureVector> {
    vectors.iter().filter(|v| !v.is_attack()).cloned().collect()
}

/// Autoencoder trained on the benign windows of `train_set` with default
/// settings, normalization fit on the same windows.
pub fn benign_autoencoder(train_set: &[FeatureVector]) -> AEModel {
    let benign = benign_only(train_set);
    let ns = normalize_fit(&benign).unwrap();
    ae_train(&normalize_apply(&benign, &ns), &ns, &AETrainConfig::default())
        .unwrap()
        .0
}

/// Small random dataset on a coarse grid so equal values and impurity ties
/// show up often.
pub fn tiny_dataset(rng: &mut impl rand::Rng) -> (Vec<Vec<f64>>, Vec<bool>) {
    let n = rng.random_range(2..=20);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(0..8) as f64 / 2.0, rng.random_range(0..8) as f64 / 2.0])
        .collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    (rows, labels)
}

/// Exhaustive search for the best root split under inverse-frequency class
/// weighted Gini. Candidates are visited in (feature, threshold) order and
/// a later one wins only with a decrease larger by more than 1e-12. Returns
/// the feature and the gap `(lo, hi)` between the adjacent values.
pub fn best_split_oracle(rows: &[Vec<f64>], labels: &[bool]) -> Option<(usize, f64, f64)> {
    let n = labels.len() as f64;
    let n_attack = labels.iter().filter(|&&l| l).count() as f64;
    let n_benign = n - n_attack;
    if n_attack == 0.0 || n_benign == 0.0 {
        return None;
    }
    let w = [n / (2.0 * n_benign), n / (2.0 * n_attack)];
    let gini = |idx: &[usize]| -> (f64, f64) {
        let b: f64 = idx.iter().filter(|&&i| !labels[i]).count() as f64 * w[0];
        let a: f64 = idx.iter().filter(|&&i| labels[i]).count() as f64 * w[1];
        let t = a + b;
        if t == 0.0 {
            (0.0, 0.0)
        } else {
            (1.0 - (a / t).powi(2) - (b / t).powi(2), t)
        }
    };
    let all: Vec<usize> = (0..labels.len()).collect();
    let (parent, total) = gini(&all);
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let thr = (pair[0] + pair[1]) / 2.0;
            let left: Vec<usize> = all.iter().copied().filter(|&i| rows[i][f] <= thr).collect();
            let right: Vec<usize> = all.iter().copied().filter(|&i| rows[i][f] > thr).collect();
            let (gl, wl) = gini(&left);
            let (gr, wr) = gini(&right);
            let decrease = parent - wl / total * gl - wr / total * gr;
            let better = match best {
                None => decrease > 1e-12,
                Some((d, ..)) => decrease > d + 1e-12,
            };
            if better {
                best = Some((decrease, f, pair[0], pair[1]));
            }
        }
    }
    best.map(|(_, f, lo, hi)| (f, lo, hi))
}

/// Trains a single full-feature stump and compares its root with the oracle.
pub fn root_split_agrees(rows: &[Vec<f64>], labels: &[bool]) -> Result<(), String> {
    use flowguard_core::forest::TreeNode;
    let params = ForestParams {
        n_trees: 1,
        max_depth: 1,
        min_samples_leaf: 1,
        features_per_split: Some(2),
        bootstrap: false,
        prune_alpha: 0.0,
    };
    let m = train(&Dataset::new(rows, labels).map_err(|e| e.to_string())?, &params, 7).map_err(|e| e.to_string())?;
    match (&m.trees[0].nodes[0], best_split_oracle(rows, labels)) {
        (TreeNode::Leaf { .. }, None) => Ok(()),
        (TreeNode::Split { feature, threshold, .. }, Some((f, lo, hi))) => {
            if *feature == f && *threshold >= lo && *threshold < hi && (threshold - (lo + hi) / 2.0).abs() < 1e-12 {
                Ok(())
            } else {
                Err(format!("tree split x{feature} <= {threshold}, oracle x{f} in ({lo}, {hi})"))
            }
        }
        (node, oracle) => Err(format!("tree root {node:?}, oracle {oracle:?}")),
    }
}

/// Random small network and batch whose hidden pre-activations stay at
/// least `1e-3` away from the rectifier kink.
pub fn gradient_case(rng: &mut impl rand::Rng) -> (AEModel, Vec<Vec<f64>>) {
    loop {
        let d = rng.random_range(2..=6);
        let dims = if rng.random_bool(0.5) {
            vec![d, rng.random_range(1..=4), d]
        } else {
            flowguard_core::autoenc::layer_dims(d)
        };
        let mut m = AEModel::zeros(&dims);
        for l in &mut m.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = rng.random_range(-1.0..1.0);
            }
        }
        let batch: Vec<Vec<f64>> = (0..rng.random_range(1..=5))
            .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        if m.min_abs_hidden_preactivation(&batch) >= 1e-3 {
            return (m, batch);
        }
    }
}

fn param(m: &mut AEModel, layer: usize, is_bias: bool, k: usize) -> &mut f64 {
    if is_bias {
        &mut m.layers[layer].bias[k]
    } else {
        &mut m.layers[layer].weights[k]
    }
}

/// Largest relative error between backprop and central differences.
pub fn max_gradient_error(model: &AEModel, batch: &[Vec<f64>], h: f64) -> f64 {
    use flowguard_core::autoenc::{ae_gradient, batch_loss};
    let g = ae_gradient(model, batch);
    let mut worst: f64 = 0.0;
    let mut m = model.clone();
    for li in 0..m.layers.len() {
        for is_bias in [false, true] {
            let n = if is_bias { m.layers[li].bias.len() } else { m.layers[li].weights.len() };
            for k in 0..n {
                let orig = *param(&mut m, li, is_bias, k);
                *param(&mut m, li, is_bias, k) = orig + h;
                let up = batch_loss(&m, batch);
                *param(&mut m, li, is_bias, k) = orig - h;
                let down = batch_loss(&m, batch);
                *param(&mut m, li, is_bias, k) = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = if is_bias { g.bias[li][k] } else { g.weights[li][k] };
                let scale = analytic.abs().max(numeric.abs());
                let err = if scale < 1e-9 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
                worst = worst.max(err);
            }
        }
    }
    worst
}
