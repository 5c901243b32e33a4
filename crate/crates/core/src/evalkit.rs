//! Window-level metrics, latency benchmarking and comparison reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::detector::TraceRow;
use crate::error::{Error, Result};
use crate::forest::AttackScorer;

/// Counts with Attack as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

pub fn confusion(predicted: &[bool], truth: &[bool]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        cm.add(p, t);
    }
    Ok(cm)
}

/// Confusion over labeled trace rows, with the prediction picked by
/// `predicted` (for example the alert flag or one model's decision).
pub fn trace_confusion(trace: &[TraceRow], predicted: impl Fn(&TraceRow) -> bool) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for r in trace {
        if let Some(label) = r.label {
            cm.add(predicted(r), label.is_attack());
        }
    }
    cm
}

/// Rates are `None` when their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `2PR / (P + R)`.
    pub f1: Option<f64>,
    /// `PR / (P + R)`, the form without the factor 2, kept for comparison
    /// with sources that print it that way.
    pub f1_unscaled: Option<f64>,
    pub fpr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let (f1, f1_unscaled) = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => (Some(2.0 * p * r / (p + r)), Some(p * r / (p + r))),
        _ => (None, None),
    };
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
        f1_unscaled,
        fpr: ratio(cm.fp, cm.fp + cm.tn),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub p50_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
    /// Timed inferences after warm-up exclusion.
    pub samples: usize,
}

pub const MIN_BENCH_VECTORS: usize = 100;

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Times single inferences over `repetitions` passes across `vectors`. The
/// first `ceil(repetitions / 10)` passes are warm-up and are not recorded.
pub fn benchmark_latency<V: AsRef<[f64]>>(
    model: &dyn AttackScorer,
    vectors: &[V],
    repetitions: usize,
) -> Result<LatencyStats> {
    if vectors.len() < MIN_BENCH_VECTORS {
        return Err(Error::TooFewVectors {
            needed: MIN_BENCH_VECTORS,
            got: vectors.len(),
        });
    }
    let warmup = repetitions.div_ceil(10);
    let timed = repetitions - warmup;
    if timed == 0 {
        return Err(Error::InsufficientRepetitions);
    }
    let mut samples = Vec::with_capacity(timed * vectors.len());
    for rep in 0..repetitions {
        for v in vectors {
            let start = Instant::now();
            let p = model.attack_probability(std::hint::black_box(v.as_ref()))?;
            let elapsed = start.elapsed();
            std::hint::black_box(p);
            if rep >= warmup {
                samples.push(elapsed.as_secs_f64() * 1e6);
            }
        }
    }
    samples.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        p50_us: percentile(&samples, 0.50),
        p99_us: percentile(&samples, 0.99),
        mean_us: samples.iter().sum::<f64>() / samples.len() as f64,
        samples: samples.len(),
    })
}

/// Hex SHA-256 of a canonical configuration string.
pub fn config_fingerprint(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub counts: ConfusionMatrix,
    pub metrics: Metrics,
    pub latency_p50_us: Option<f64>,
    pub latency_p99_us: Option<f64>,
    pub model_size_bytes: Option<u64>,
    pub quantized_size_bytes: Option<u64>,
    pub fingerprint: String,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionMatrix, fingerprint: impl Into<String>) -> Result<Self> {
        Ok(MetricsReport {
            metrics: metrics(&counts)?,
            counts,
            latency_p50_us: None,
            latency_p99_us: None,
            model_size_bytes: None,
            quantized_size_bytes: None,
            fingerprint: fingerprint.into(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    /// Free-form scenario metadata, written in key order.
    pub meta: BTreeMap<String, String>,
    /// Named columns in presentation order.
    pub columns: Vec<(String, MetricsReport)>,
}

const ABSENT: &str = "absent";

fn opt_f(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| x.to_string())
}

fn opt_u(v: Option<u64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| x.to_string())
}

fn fields(m: &MetricsReport) -> Vec<(&'static str, String)> {
    vec![
        ("tp", m.counts.tp.to_string()),
        ("tn", m.counts.tn.to_string()),
        ("fp", m.counts.fp.to_string()),
        ("fn", m.counts.fn_.to_string()),
        ("accuracy", m.metrics.accuracy.to_string()),
        ("precision", opt_f(m.metrics.precision)),
        ("recall", opt_f(m.metrics.recall)),
        ("f1", opt_f(m.metrics.f1)),
        ("f1_unscaled", opt_f(m.metrics.f1_unscaled)),
        ("fpr", opt_f(m.metrics.fpr)),
        ("latency_p50_us", opt_f(m.latency_p50_us)),
        ("latency_p99_us", opt_f(m.latency_p99_us)),
        ("model_size_bytes", opt_u(m.model_size_bytes)),
        ("quantized_size_bytes", opt_u(m.quantized_size_bytes)),
        ("fingerprint", m.fingerprint.clone()),
    ]
}

fn table_cell(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) if v.contains('.') => format!("{x:.4}"),
        _ => v.to_string(),
    }
}

/// Renders the report: `key=value` lines followed by a fenced comparison
/// table. Column names must not contain `.`, `=`, `,` or whitespace.
pub fn render_report(report: &Report) -> Result<String> {
    if report.columns.is_empty() {
        return Err(Error::EmptyReport);
    }
    for (name, _) in &report.columns {
        if name.is_empty() || name.contains(['.', '=', ',']) || name.contains(char::is_whitespace) {
            return Err(Error::MalformedReport(format!("bad column name `{name}`")));
        }
    }
    let mut out = String::from("# evaluation report\n");
    for (k, v) in &report.meta {
        let _ = writeln!(out, "meta.{k}={v}");
    }
    let names: Vec<&str> = report.columns.iter().map(|(n, _)| n.as_str()).collect();
    let _ = writeln!(out, "columns={}", names.join(","));
    for (name, m) in &report.columns {
        for (k, v) in fields(m) {
            let _ = writeln!(out, "{name}.{k}={v}");
        }
    }
    out.push_str("\n```table\n");
    let _ = writeln!(out, "| metric | {} |", names.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(names.len()));
    let rendered: Vec<Vec<(&str, String)>> = report.columns.iter().map(|(_, m)| fields(m)).collect();
    for (row, (key, _)) in rendered[0].iter().enumerate() {
        if *key == "fingerprint" {
            continue;
        }
        let cells: Vec<String> = rendered.iter().map(|f| table_cell(&f[row].1)).collect();
        let _ = writeln!(out, "| {key} | {} |", cells.join(" | "));
    }
    out.push_str("```\n");
    Ok(out)
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    let text = render_report(report)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_opt<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    let v = kv
        .get(key)
        .ok_or_else(|| Error::MalformedReport(format!("missing `{key}`")))?;
    if v == ABSENT {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .map_err(|_| Error::MalformedReport(format!("bad value for `{key}`: {v}")))
}

fn parse_req<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
    parse_opt(kv, key)?.ok_or_else(|| Error::MalformedReport(format!("`{key}` may not be absent")))
}

/// Parses the `key=value` part of a rendered report. The table is ignored.
pub fn parse_report(text: &str) -> Result<Report> {
    let mut kv = BTreeMap::new();
    let mut in_fence = false;
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence || line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::MalformedReport(format!("line without `=`: {line}")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let columns = kv
        .get("columns")
        .ok_or_else(|| Error::MalformedReport("missing `columns`".into()))?
        .clone();
    if columns.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut report = Report::default();
    for (k, v) in &kv {
        if let Some(m) = k.strip_prefix("meta.") {
            report.meta.insert(m.to_string(), v.clone());
        }
    }
    for name in columns.split(',') {
        let sub: BTreeMap<String, String> = kv
            .iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(name)
                    .and_then(|r| r.strip_prefix('.'))
                    .map(|r| (r.to_string(), v.clone()))
            })
            .collect();
        let counts = ConfusionMatrix {
            tp: parse_req(&sub, "tp")?,
            tn: parse_req(&sub, "tn")?,
            fp: parse_req(&sub, "fp")?,
            fn_: parse_req(&sub, "fn")?,
        };
        let m = MetricsReport {
            counts,
            metrics: Metrics {
                accuracy: parse_req(&sub, "accuracy")?,
                precision: parse_opt(&sub, "precision")?,
                recall: parse_opt(&sub, "recall")?,
                f1: parse_opt(&sub, "f1")?,
                f1_unscaled: parse_opt(&sub, "f1_unscaled")?,
                fpr: parse_opt(&sub, "fpr")?,
            },
            latency_p50_us: parse_opt(&sub, "latency_p50_us")?,
            latency_p99_us: parse_opt(&sub, "latency_p99_us")?,
            model_size_bytes: parse_opt(&sub, "model_size_bytes")?,
            quantized_size_bytes: parse_opt(&sub, "quantized_size_bytes")?,
            fingerprint: parse_req(&sub, "fingerprint")?,
        };
        report.columns.push((name.to_string(), m));
    }
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text)
}
