mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flowguard_core::autoenc::{ae_score, ae_train, ae_train_rows, load_ae, save_ae, AETrainConfig};
use flowguard_core::detector::quantile;
use flowguard_core::features::{normalize_apply, normalize_fit};

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..40 {
        let (m, batch) = common::gradient_case(&mut rng);
        let err = common::max_gradient_error(&m, &batch, 1e-5);
        assert!(err < 1e-4, "case {case} dims {:?}: relative error {err}", m.dims());
    }
}

#[test]
fn a_constant_input_is_learned() {
    let x = vec![0.2, 0.9, 0.4, 0.0, 1.0, 0.33, 0.5, 0.5, 0.1, 0.7, 0.8, 0.05];
    let rows = vec![x.clone(); 64];
    let (m, log) = ae_train_rows(&flowguard_core::autoenc::layer_dims(12), &rows, &AETrainConfig::default()).unwrap();
    assert!(ae_score(&m, &x).unwrap() < 1e-3);
    assert!(log.epoch_loss.iter().all(|l| l.is_finite()));
}

#[test]
fn benign_training_descends_and_is_deterministic() {
    let split = common::default_split();
    let benign = common::benign_only(&split.train);
    let ns = normalize_fit(&benign).unwrap();
    let normalized = normalize_apply(&benign, &ns);
    let cfg = AETrainConfig::default();
    let (a, log) = ae_train(&normalized, &ns, &cfg).unwrap();
    assert_eq!(log.epoch_loss.len(), cfg.epochs + 1);
    assert!(log.epoch_loss.last().unwrap() < &log.epoch_loss[0]);
    let (b, _) = ae_train(&normalized, &ns, &cfg).unwrap();
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ae.bin");
    save_ae(&a, &p).unwrap();
    assert_eq!(load_ae(&p).unwrap(), a);

    // attack windows stand out against benign ones on held-out data
    let score = |v: &flowguard_core::FeatureVector| a.score_raw(&v.values).unwrap();
    let benign_scores: Vec<f64> = split.test.iter().filter(|v| !v.is_attack()).map(score).collect();
    let attack_scores: Vec<f64> = split.test.iter().filter(|v| v.is_attack()).map(score).collect();
    let p95 = quantile(&benign_scores, 0.95);
    let median = quantile(&attack_scores, 0.5);
    assert!(median > p95, "attack median {median} vs benign p95 {p95}");
}
