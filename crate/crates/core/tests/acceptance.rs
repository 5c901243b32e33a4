//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowguard_core::autoenc::{ae_train, save_ae, AETrainConfig};
use flowguard_core::detector::{detect_vectors, write_alerts, write_trace, Detection, DetectorConfig};
use flowguard_core::evalkit::{
    benchmark_latency, config_fingerprint, confusion, metrics, trace_confusion, write_report, ConfusionMatrix,
    MetricsReport, Report,
};
use flowguard_core::features::{
    extract, normalize_apply, normalize_fit, shannon_entropy, write_features, SplitPart, TimeSplit, WindowConfig,
};
use flowguard_core::flowdata::{write_flows, write_telemetry};
use flowguard_core::forest::{quantize, save_forest, save_quantized, ForestModel};
use flowguard_core::synthgen::{generate, ScenarioConfig};
use flowguard_core::{AEModel, AttackKind, FeatureVector};

const C1_MIN_ACCURACY: f64 = 0.95;
const C1_MIN_RECALL: f64 = 0.95;
const C1_MAX_RUNTIME: Duration = Duration::from_secs(120);
const C2_MAX_FPR: f64 = 0.05;
const C2_MAX_RUNTIME: Duration = Duration::from_secs(60);
const C2_BENIGN_SEED: u64 = 7;
const C3_MIN_AE_RECALL: f64 = 0.80;
const C3_LOW_RATE_SEED: u64 = 11;
const C4_MAX_SIZE_RATIO: f64 = 0.70;
const C4_MIN_AGREEMENT: f64 = 0.99;
const C4_VECTORS: usize = 10_000;
const C5_REPETITIONS: usize = 30;
const C6_MATRICES: usize = 1_000;
const C6_F1_TOL: f64 = 1e-12;
const C7_HISTOGRAMS: usize = 1_000;
const C7_TOL: f64 = 1e-9;
const C8_CONFIGS: usize = 20;
const C8_STEP: f64 = 1e-5;
const C8_MAX_REL_ERR: f64 = 1e-4;
const C9_DATASETS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Models {
    split: common::Split,
    forest: ForestModel,
    ae: AEModel,
}

fn fpr_after_warmup(det: &Detection) -> (f64, ConfusionMatrix) {
    let warm: Vec<_> = det.trace.iter().filter(|r| r.ae_effective_threshold.is_finite()).cloned().collect();
    let cm = trace_confusion(&warm, |r| r.alert);
    (metrics(&cm).map(|m| m.fpr.unwrap_or(1.0)).unwrap_or(1.0), cm)
}

fn c1(models: &Models, elapsed: Duration) -> Outcome {
    let pred: Vec<bool> = models.split.test.iter().map(|v| models.forest.predict(&v.values, 0.5).unwrap()).collect();
    let truth: Vec<bool> = models.split.test.iter().map(FeatureVector::is_attack).collect();
    let m = metrics(&confusion(&pred, &truth).unwrap()).unwrap();
    let recall = m.recall.unwrap_or(0.0);
    outcome(
        m.accuracy >= C1_MIN_ACCURACY && recall >= C1_MIN_RECALL && elapsed < C1_MAX_RUNTIME,
        format!(
            "accuracy={:.4} (>= {C1_MIN_ACCURACY}) recall={recall:.4} (>= {C1_MIN_RECALL}) test_windows={} runtime={:.1}s (< {}s)",
            m.accuracy,
            pred.len(),
            elapsed.as_secs_f64(),
            C1_MAX_RUNTIME.as_secs()
        ),
    )
}

fn c2(models: &Models, benign: &[FeatureVector]) -> Outcome {
    let t = Instant::now();
    let det = detect_vectors(benign, &models.forest, &models.ae, &DetectorConfig::default()).unwrap();
    let (fpr, cm) = fpr_after_warmup(&det);
    let elapsed = t.elapsed();
    outcome(
        fpr <= C2_MAX_FPR && elapsed < C2_MAX_RUNTIME,
        format!(
            "seed={C2_BENIGN_SEED} fpr={fpr:.4} (<= {C2_MAX_FPR}) fp={} tn={} runtime={:.1}s (< {}s)",
            cm.fp,
            cm.tn,
            elapsed.as_secs_f64(),
            C2_MAX_RUNTIME.as_secs()
        ),
    )
}

fn c3(models: &Models, benign: &[FeatureVector]) -> Outcome {
    let no_low_rate = |vs: &[FeatureVector]| -> Vec<FeatureVector> {
        vs.iter()
            .filter(|v| v.label.and_then(|l| l.attack_kind()) != Some(AttackKind::LowRate))
            .cloned()
            .collect()
    };
    let forest = common::pruned_forest(&no_low_rate(&models.split.train), &no_low_rate(&models.split.validation));
    let cfg = DetectorConfig::default();
    let low_rate = common::scenario_vectors(&ScenarioConfig::low_rate_only(C3_LOW_RATE_SEED));
    let det = detect_vectors(&low_rate, &forest, &models.ae, &cfg).unwrap();
    let attack: Vec<_> = det.trace.iter().filter(|r| r.label.is_some_and(|l| l.is_attack())).collect();
    let ae_recall = attack.iter().filter(|r| r.ae_fired).count() as f64 / attack.len().max(1) as f64;
    let rf_recall = attack.iter().filter(|r| r.rf_fired).count() as f64 / attack.len().max(1) as f64;
    let (fpr, _) = fpr_after_warmup(&detect_vectors(benign, &forest, &models.ae, &cfg).unwrap());
    outcome(
        !attack.is_empty() && ae_recall >= C3_MIN_AE_RECALL && fpr <= C2_MAX_FPR,
        format!(
            "seed={C3_LOW_RATE_SEED} low_rate_windows={} ae_recall={ae_recall:.4} (>= {C3_MIN_AE_RECALL}) rf_recall={rf_recall:.4} benign_fpr={fpr:.4} (<= {C2_MAX_FPR})",
            attack.len()
        ),
    )
}

fn c4(models: &Models, dir: &Path) -> Outcome {
    let q = quantize(&models.forest).unwrap();
    let (fp, qp) = (dir.join("c4.forest"), dir.join("c4.qforest"));
    save_forest(&models.forest, &fp).unwrap();
    save_quantized(&q, &qp).unwrap();
    let float_size = std::fs::metadata(&fp).unwrap().len();
    let q_size = std::fs::metadata(&qp).unwrap().len();
    let ratio = q_size as f64 / float_size as f64;

    let m = &models.forest;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut agree = 0usize;
    for _ in 0..C4_VECTORS {
        let x: Vec<f64> = (0..m.n_features).map(|f| rng.random_range(m.feature_min[f]..=m.feature_max[f])).collect();
        agree += usize::from(m.predict(&x, 0.5).unwrap() == (q.predict_quantized(&x).unwrap() >= 0.5));
    }
    let agreement = agree as f64 / C4_VECTORS as f64;
    outcome(
        ratio <= C4_MAX_SIZE_RATIO && agreement >= C4_MIN_AGREEMENT,
        format!(
            "float={float_size}B quantized={q_size}B reduction={:.1}% (>= {:.0}%) agreement={agreement:.4} (>= {C4_MIN_AGREEMENT}) over {C4_VECTORS} vectors",
            100.0 * (1.0 - ratio),
            100.0 * (1.0 - C4_MAX_SIZE_RATIO)
        ),
    )
}

fn c5(models: &Models) -> Outcome {
    let q = quantize(&models.forest).unwrap();
    let vectors: Vec<[f64; 12]> = models.split.test.iter().map(|v| v.values).collect();
    let float = benchmark_latency(&models.forest, &vectors, C5_REPETITIONS).unwrap();
    let quant = benchmark_latency(&q, &vectors, C5_REPETITIONS).unwrap();
    outcome(
        quant.p50_us <= float.p50_us,
        format!(
            "p50 float={:.3}us quantized={:.3}us (quantized <= float) p99 float={:.3}us quantized={:.3}us",
            float.p50_us, quant.p50_us, float.p99_us, quant.p99_us
        ),
    )
}

fn c6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    let mut undefined_seen = 0;
    for case in 0..C6_MATRICES {
        let n = rng.random_range(1..200);
        let p_pos = [0.0, 0.02, 0.5, 0.98, 1.0][case % 5];
        let predicted: Vec<bool> = (0..n).map(|_| rng.random_bool(p_pos)).collect();
        let p_attack: f64 = rng.random_range(0.0..=1.0);
        let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(p_attack)).collect();
        let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&p, &t) in predicted.iter().zip(&truth) {
            match (p, t) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
        let cm = confusion(&predicted, &truth).unwrap();
        let m = metrics(&cm).unwrap();
        let div = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        let precision = div(tp, tp + fp);
        let recall = div(tp, tp + fn_);
        let f1_ok = match (precision, recall, m.f1) {
            (Some(p), Some(r), Some(f)) if p + r > 0.0 => (f - 2.0 * p * r / (p + r)).abs() <= C6_F1_TOL,
            (Some(p), Some(r), None) => p + r == 0.0,
            (_, _, None) => precision.is_none() || recall.is_none(),
            _ => false,
        };
        undefined_seen += usize::from(precision.is_none() || recall.is_none() || m.fpr.is_none());
        let exact = cm == (ConfusionMatrix { tp, tn, fp, fn_ })
            && m.accuracy == (tp + tn) as f64 / n as f64
            && m.precision == precision
            && m.recall == recall
            && m.fpr == div(fp, fp + tn);
        if !(exact && f1_ok) {
            failures.push(case);
        }
    }
    outcome(
        failures.is_empty() && undefined_seen > 0,
        format!(
            "matrices={C6_MATRICES} mismatches={} undefined_cases={undefined_seen} f1_tol={C6_F1_TOL:e}",
            failures.len()
        ),
    )
}

fn c7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut bounds_ok = true;
    for _ in 0..C7_HISTOGRAMS {
        let k = rng.random_range(1..64);
        let counts: Vec<u64> = (0..k).map(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(1..10_000) }).collect();
        let total: u64 = counts.iter().sum();
        let direct: f64 = if total == 0 {
            0.0
        } else {
            -counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| c as f64 / total as f64)
                .map(|p| p * p.log2())
                .sum::<f64>()
        };
        let h = shannon_entropy(&counts);
        worst = worst.max((h - direct).abs());
        bounds_ok &= h >= 0.0 && h <= (k as f64).log2() + C7_TOL;
        let uniform = shannon_entropy(&vec![rng.random_range(1..1000u64); k]);
        bounds_ok &= (uniform - (k as f64).log2()).abs() <= C7_TOL;
    }
    outcome(
        worst <= C7_TOL && bounds_ok,
        format!("histograms={C7_HISTOGRAMS} max_abs_err={worst:.2e} (<= {C7_TOL:e}) bounds_and_uniform_max={bounds_ok}"),
    )
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let worst = (0..C8_CONFIGS)
        .map(|_| {
            let (m, batch) = common::gradient_case(&mut rng);
            common::max_gradient_error(&m, &batch, C8_STEP)
        })
        .fold(0.0f64, f64::max);
    outcome(
        worst < C8_MAX_REL_ERR,
        format!("configs={C8_CONFIGS} step={C8_STEP:e} max_rel_err={worst:.2e} (< {C8_MAX_REL_ERR:e})"),
    )
}

fn c9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = Vec::new();
    for case in 0..C9_DATASETS {
        let (rows, labels) = common::tiny_dataset(&mut rng);
        if let Err(msg) = common::root_split_agrees(&rows, &labels) {
            mismatches.push(format!("case {case}: {msg}"));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "datasets={C9_DATASETS} (<= 20 samples x 2 features) mismatches={}{}",
            mismatches.len(),
            mismatches.first().map(|m| format!(" first: {m}")).unwrap_or_default()
        ),
    )
}

/// Runs generation through reporting into `dir` with fixed seeds.
fn full_pipeline(dir: &Path) {
    let scenario = ScenarioConfig::default();
    let trace = generate(&scenario).unwrap();
    write_flows(&trace.flows, &dir.join("flows.csv")).unwrap();
    write_telemetry(&trace.telemetry, &dir.join("telemetry.csv")).unwrap();
    let vectors = extract(&trace.flows, &trace.telemetry, &WindowConfig::default()).unwrap();
    write_features(&vectors, &dir.join("features.csv")).unwrap();

    let split = TimeSplit::default();
    let train = split.select(&vectors, SplitPart::Train);
    let forest = common::pruned_forest(&train, &split.select(&vectors, SplitPart::Validation));
    save_forest(&forest, &dir.join("forest.bin")).unwrap();
    save_quantized(&quantize(&forest).unwrap(), &dir.join("forest.q.bin")).unwrap();

    let benign = common::benign_only(&train);
    let ns = normalize_fit(&benign).unwrap();
    let (ae, _) = ae_train(&normalize_apply(&benign, &ns), &ns, &AETrainConfig::default()).unwrap();
    save_ae(&ae, &dir.join("ae.bin")).unwrap();

    let cfg = DetectorConfig::default();
    let test = split.select(&vectors, SplitPart::Test);
    let det = detect_vectors(&test, &forest, &ae, &cfg).unwrap();
    write_alerts(&det.alerts, &dir.join("alerts.txt")).unwrap();
    write_trace(&det.trace, &dir.join("trace.csv")).unwrap();

    let mut report = Report::default();
    report.meta.insert("seed".into(), scenario.seed.to_string());
    let cm = trace_confusion(&det.trace, |r| r.alert);
    report
        .columns
        .push(("either".into(), MetricsReport::from_counts(cm, config_fingerprint(&format!("{cfg:?}"))).unwrap()));
    write_report(&report, &dir.join("report.txt")).unwrap();
}

fn c10() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    full_pipeline(a.path());
    full_pipeline(b.path());
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.path().join(n)).ok() != std::fs::read(b.path().join(n)).ok())
        .collect();
    outcome(
        differing.is_empty() && names.len() == 9,
        format!("files={} [{}] differing={differing:?}", names.len(), names.join(",")),
    )
}

fn main() {
    let start = Instant::now();
    let t = Instant::now();
    let split = common::default_split();
    let forest = common::pruned_forest(&split.train, &split.validation);
    let c1_elapsed = t.elapsed();
    let ae = common::benign_autoencoder(&split.train);
    let models = Models { split, forest, ae };
    let benign = common::scenario_vectors(&ScenarioConfig::benign(C2_BENIGN_SEED));
    let dir = tempfile::tempdir().unwrap();

    let results = [
        ("detection accuracy", c1(&models, c1_elapsed)),
        ("benign false-positive rate", c2(&models, &benign)),
        ("unseen low-rate attack", c3(&models, &benign)),
        ("quantized size and agreement", c4(&models, dir.path())),
        ("quantized latency direction", c5(&models)),
        ("metric correctness", c6()),
        ("entropy oracle", c7()),
        ("gradient check", c8()),
        ("split-search oracle", c9()),
        ("determinism", c10()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed in {:.1}s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
