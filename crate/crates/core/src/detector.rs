//! Streaming detection: runs both models over each device window and raises
//! alerts.
//!
//! The anomaly path keeps a per-device buffer of recent reconstruction
//! errors that did not fire. Its threshold is an empirical quantile of that
//! buffer, scaled up while the device's CPU is saturated. Until the buffer
//! holds [`DetectorConfig::warmup`] scores the path stays silent.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::autoenc::AEModel;
use crate::error::{Error, Result};
use crate::features::{extract, FeatureVector, WindowConfig, N_FEATURES};
use crate::flowdata::{label_cell, DeviceTelemetry, FlowRecord};
use crate::forest::AttackScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    #[default]
    Either,
    Both,
    RfOnly,
    AeOnly,
}

impl Combine {
    pub fn as_str(self) -> &'static str {
        match self {
            Combine::Either => "either",
            Combine::Both => "both",
            Combine::RfOnly => "rf-only",
            Combine::AeOnly => "ae-only",
        }
    }

    fn fires(self, rf: bool, ae: bool) -> bool {
        match self {
            Combine::Either => rf || ae,
            Combine::Both => rf && ae,
            Combine::RfOnly => rf,
            Combine::AeOnly => ae,
        }
    }
}

impl fmt::Display for Combine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Combine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "either" => Ok(Combine::Either),
            "both" => Ok(Combine::Both),
            "rf-only" | "rf" => Ok(Combine::RfOnly),
            "ae-only" | "ae" => Ok(Combine::AeOnly),
            other => Err(format!("unknown combine rule `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub rf_threshold: f64,
    pub ae_quantile: f64,
    pub ae_history: usize,
    /// Buffered scores required before the anomaly path may fire.
    pub warmup: usize,
    /// Load relief is `1 + relief_gain * max(0, cpu - relief_knee) / relief_span`.
    pub relief_gain: f64,
    pub relief_knee: f64,
    pub relief_span: f64,
    pub combine: Combine,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            rf_threshold: 0.5,
            ae_quantile: 0.99,
            ae_history: 200,
            warmup: 30,
            relief_gain: 0.2,
            relief_knee: 80.0,
            relief_span: 20.0,
            combine: Combine::Either,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rf_threshold > 0.0 && self.rf_threshold < 1.0) {
            return Err(Error::InvalidConfig("rf_threshold must lie in (0, 1)".into()));
        }
        if !(self.ae_quantile >= 0.5 && self.ae_quantile < 1.0) {
            return Err(Error::InvalidConfig("ae_quantile must lie in [0.5, 1)".into()));
        }
        if self.ae_history < 10 {
            return Err(Error::InvalidConfig("ae_history must be >= 10".into()));
        }
        if self.warmup == 0 || self.warmup > self.ae_history {
            return Err(Error::InvalidConfig("warmup must lie in [1, ae_history]".into()));
        }
        if !(self.relief_gain >= 0.0 && self.relief_span > 0.0 && self.relief_knee.is_finite()) {
            return Err(Error::InvalidConfig("load relief needs gain >= 0 and span > 0".into()));
        }
        Ok(())
    }

    /// Threshold multiplier for a device running at `cpu_pct`.
    pub fn load_relief(&self, cpu_pct: f64) -> f64 {
        1.0 + self.relief_gain * (cpu_pct - self.relief_knee).max(0.0) / self.relief_span
    }
}

/// Linear-interpolation empirical quantile. `values` need not be sorted.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertSource {
    RandomForest,
    Autoencoder,
    Both,
}

impl AlertSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertSource::RandomForest => "random_forest",
            AlertSource::Autoencoder => "autoencoder",
            AlertSource::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Advisory,
    Critical,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Advisory => "advisory",
            Severity::Critical => "critical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub device: String,
    pub window_start: f64,
    pub source: AlertSource,
    pub rf_probability: f64,
    pub ae_score: f64,
    /// Effective anomaly threshold (after load relief) when the alert was
    /// raised; infinite while the anomaly path was warming up.
    pub ae_threshold_at_emit: f64,
    pub severity: Severity,
}

/// Field order of one alert line.
pub const ALERT_FIELDS: [&str; 7] = [
    "window_start",
    "device",
    "source",
    "severity",
    "rf_probability",
    "ae_score",
    "ae_threshold",
];

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "window_start={} device={} source={} severity={} rf_probability={} ae_score={} ae_threshold={}",
            self.window_start,
            self.device,
            self.source.as_str(),
            self.severity.as_str(),
            self.rf_probability,
            self.ae_score,
            self.ae_threshold_at_emit
        )
    }
}

/// One processed window, written to `trace.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub device: String,
    pub window_start: f64,
    pub label: Option<crate::flowdata::TrafficLabel>,
    pub rf_probability: f64,
    pub rf_fired: bool,
    pub ae_score: f64,
    /// Buffer quantile before this window (0 for an empty buffer).
    pub ae_threshold: f64,
    pub cpu_pct: f64,
    /// `ae_threshold * load_relief`, or infinity during warm-up.
    pub ae_effective_threshold: f64,
    pub ae_fired: bool,
    /// The score went into the device buffer after the decision.
    pub ae_admitted: bool,
    pub alert: bool,
}

pub const TRACE_HEADER: &str = "device,window_start,label,rf_probability,rf_fired,ae_score,ae_threshold,cpu_pct,ae_effective_threshold,ae_fired,ae_admitted,alert";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceState {
    pub buffer: VecDeque<f64>,
    pub threshold: f64,
    pub windows_seen: u64,
    pub alerts_emitted: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorState {
    pub devices: BTreeMap<String, DeviceState>,
}

impl DetectorState {
    pub fn windows_seen(&self) -> u64 {
        self.devices.values().map(|d| d.windows_seen).sum()
    }

    pub fn alerts_emitted(&self) -> u64 {
        self.devices.values().map(|d| d.alerts_emitted).sum()
    }
}

fn check_models(rf: &dyn AttackScorer, ae: &AEModel) -> Result<()> {
    if rf.n_features() != N_FEATURES || ae.input_dim() != N_FEATURES {
        return Err(Error::SchemaMismatch(format!(
            "models expect {} and {} features, vectors carry {N_FEATURES}",
            rf.n_features(),
            ae.input_dim()
        )));
    }
    Ok(())
}

fn step_device(
    ds: &mut DeviceState,
    fv: &FeatureVector,
    rf: &dyn AttackScorer,
    ae: &AEModel,
    cfg: &DetectorConfig,
) -> Result<(TraceRow, Option<Alert>)> {
    let rf_probability = rf.attack_probability(&fv.values)?;
    let ae_score = ae.score_raw(&fv.values)?;
    let rf_fired = rf_probability >= cfg.rf_threshold;
    let warm = ds.buffer.len() >= cfg.warmup;
    let effective = if warm {
        ds.threshold * cfg.load_relief(fv.cpu_pct())
    } else {
        f64::INFINITY
    };
    let ae_fired = warm && ae_score > effective;
    let ae_threshold = ds.threshold;
    if !ae_fired {
        ds.buffer.push_back(ae_score);
        while ds.buffer.len() > cfg.ae_history {
            ds.buffer.pop_front();
        }
        ds.threshold = quantile(ds.buffer.make_contiguous(), cfg.ae_quantile);
    }
    ds.windows_seen += 1;
    let alert = cfg.combine.fires(rf_fired, ae_fired).then(|| {
        ds.alerts_emitted += 1;
        let (source, severity) = match (rf_fired, ae_fired) {
            (true, true) => (AlertSource::Both, Severity::Critical),
            (true, false) => (AlertSource::RandomForest, Severity::Advisory),
            _ => (AlertSource::Autoencoder, Severity::Advisory),
        };
        Alert {
            device: fv.device.clone(),
            window_start: fv.window_start,
            source,
            rf_probability,
            ae_score,
            ae_threshold_at_emit: effective,
            severity,
        }
    });
    let row = TraceRow {
        device: fv.device.clone(),
        window_start: fv.window_start,
        label: fv.label,
        rf_probability,
        rf_fired,
        ae_score,
        ae_threshold,
        cpu_pct: fv.cpu_pct(),
        ae_effective_threshold: effective,
        ae_fired,
        ae_admitted: !ae_fired,
        alert: alert.is_some(),
    };
    Ok((row, alert))
}

/// Runs one raw (unnormalized) feature vector through both models and
/// updates that device's state.
pub fn process_window(
    state: &mut DetectorState,
    fv: &FeatureVector,
    rf: &dyn AttackScorer,
    ae: &AEModel,
    cfg: &DetectorConfig,
) -> Result<(TraceRow, Option<Alert>)> {
    check_models(rf, ae)?;
    let ds = state.devices.entry(fv.device.clone()).or_default();
    step_device(ds, fv, rf, ae, cfg)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detection {
    /// Sorted by `(window_start, device)`.
    pub alerts: Vec<Alert>,
    /// Every processed window, same order as the alerts.
    pub trace: Vec<TraceRow>,
    pub state: DetectorState,
}

fn by_time_then_device(a: (f64, &str), b: (f64, &str)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Detection over already-extracted vectors. Each device is one shard with
/// a single writer; shards run in parallel.
pub fn detect_vectors(
    vectors: &[FeatureVector],
    rf: &dyn AttackScorer,
    ae: &AEModel,
    cfg: &DetectorConfig,
) -> Result<Detection> {
    cfg.validate()?;
    check_models(rf, ae)?;
    let mut shards: BTreeMap<&str, Vec<&FeatureVector>> = BTreeMap::new();
    for v in vectors {
        shards.entry(v.device.as_str()).or_default().push(v);
    }
    let results: Vec<(String, DeviceState, Vec<TraceRow>, Vec<Alert>)> = shards
        .into_par_iter()
        .map(|(device, mut vs)| {
            vs.sort_by(|a, b| a.window_start.total_cmp(&b.window_start));
            let mut ds = DeviceState::default();
            let mut rows = Vec::with_capacity(vs.len());
            let mut alerts = Vec::new();
            for fv in vs {
                let (row, alert) = step_device(&mut ds, fv, rf, ae, cfg)?;
                rows.push(row);
                alerts.extend(alert);
            }
            Ok((device.to_string(), ds, rows, alerts))
        })
        .collect::<Result<_>>()?;

    let mut out = Detection::default();
    for (device, ds, rows, alerts) in results {
        out.state.devices.insert(device, ds);
        out.trace.extend(rows);
        out.alerts.extend(alerts);
    }
    out.trace
        .sort_by(|a, b| by_time_then_device((a.window_start, &a.device), (b.window_start, &b.device)));
    out.alerts
        .sort_by(|a, b| by_time_then_device((a.window_start, &a.device), (b.window_start, &b.device)));
    Ok(out)
}

/// Feature extraction followed by detection.
pub fn run_stream(
    flows: &[FlowRecord],
    telemetry: &[DeviceTelemetry],
    rf: &dyn AttackScorer,
    ae: &AEModel,
    wc: &WindowConfig,
    cfg: &DetectorConfig,
) -> Result<Detection> {
    let vectors = extract(flows, telemetry, wc)?;
    detect_vectors(&vectors, rf, ae, cfg)
}

pub fn write_alerts(alerts: &[Alert], path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for a in alerts {
        writeln!(w, "{a}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{TRACE_HEADER}").map_err(io)?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.device,
            r.window_start,
            label_cell(r.label),
            r.rf_probability,
            r.rf_fired as u8,
            r.ae_score,
            r.ae_threshold,
            r.cpu_pct,
            r.ae_effective_threshold,
            r.ae_fired as u8,
            r.ae_admitted as u8,
            r.alert as u8
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
