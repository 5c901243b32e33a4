use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowguard_core::evalkit::{
    benchmark_latency, config_fingerprint, confusion, metrics, parse_report, read_report, render_report,
    write_report, ConfusionMatrix, MetricsReport, Report,
};
use flowguard_core::forest::{train, Dataset, ForestParams};
use flowguard_core::Error;

#[test]
fn thousand_pairs_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let predicted: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.4)).collect();
    let truth: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.3)).collect();
    let mut tally = [[0u64; 2]; 2];
    for i in 0..1000 {
        tally[predicted[i] as usize][truth[i] as usize] += 1;
    }
    let cm = confusion(&predicted, &truth).unwrap();
    assert_eq!(
        cm,
        ConfusionMatrix { tp: tally[1][1], tn: tally[0][0], fp: tally[1][0], fn_: tally[0][1] }
    );
    assert!(matches!(confusion(&[], &[]), Err(Error::EmptyMatrix)));
}

fn column(cm: ConfusionMatrix, tag: &str) -> MetricsReport {
    let mut m = MetricsReport::from_counts(cm, config_fingerprint(tag)).unwrap();
    m.latency_p50_us = Some(3.25);
    m.model_size_bytes = Some(120_034);
    m
}

#[test]
fn two_configuration_report_round_trips() {
    let mut report = Report::default();
    report.meta.insert("scenario".into(), "default".into());
    report.meta.insert("seed".into(), "42".into());
    report.columns.push(("either".into(), column(ConfusionMatrix { tp: 40, tn: 900, fp: 21, fn_: 3 }, "either")));
    // no positive predictions: precision and f1 are absent
    report.columns.push(("both".into(), column(ConfusionMatrix { tp: 0, tn: 921, fp: 0, fn_: 43 }, "both")));

    let text = render_report(&report).unwrap();
    assert!(text.contains("| metric | either | both |"));
    assert!(text.contains("both.precision=absent"));
    assert!(text.contains("either.f1_unscaled="));
    assert!(!text.contains("NaN"));
    assert_eq!(parse_report(&text).unwrap(), report);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("report.txt");
    write_report(&report, &p).unwrap();
    assert_eq!(read_report(&p).unwrap(), report);
    assert_eq!(std::fs::read_to_string(&p).unwrap(), text);

    assert!(matches!(render_report(&Report::default()), Err(Error::EmptyReport)));
    let m = metrics(&ConfusionMatrix { tp: 40, tn: 900, fp: 21, fn_: 3 }).unwrap();
    assert_eq!(report.columns[0].1.metrics, m);
}

#[test]
fn latency_benchmark_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r[0] + r[1] > 1.0).collect();
    let params = ForestParams { n_trees: 10, ..ForestParams::default() };
    let m = train(&Dataset::new(&rows, &labels).unwrap(), &params, 2).unwrap();

    assert!(matches!(benchmark_latency(&m, &rows[..50], 10), Err(Error::TooFewVectors { .. })));
    for reps in [0, 1] {
        assert!(matches!(benchmark_latency(&m, &rows, reps), Err(Error::InsufficientRepetitions)));
    }
    let a = benchmark_latency(&m, &rows, 20).unwrap();
    let b = benchmark_latency(&m, &rows, 20).unwrap();
    assert_eq!(a.samples, 18 * rows.len());
    assert!(a.p50_us <= a.p99_us);
    let ratio = a.p50_us.max(b.p50_us) / a.p50_us.min(b.p50_us).max(1e-3);
    assert!(ratio <= 3.0, "p50 {} vs {}", a.p50_us, b.p50_us);
}
