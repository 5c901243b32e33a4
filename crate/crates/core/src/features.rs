//! Windowed behavioral features per device.
//!
//! Windows of `window_s` seconds start every `stride_s` seconds from the first
//! timestamp seen in either input. A flow belongs to a device's window when
//! the device is its source or its destination and the flow timestamp falls in
//! `[start, start + window_s)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flowdata::{
    label_cell, parse_label_cell, AttackKind, DeviceTelemetry, FlowRecord, TrafficLabel,
};

pub const N_FEATURES: usize = 12;

/// Bumped whenever feature order or semantics change. Serialized models
/// carry it and refuse to load under a different value.
pub const FEATURE_SCHEMA_VERSION: u16 = 1;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "entropy_dst_port",
    "entropy_pkt_size",
    "request_frequency",
    "bandwidth_utilization",
    "cpu_pct_mean",
    "mem_pct_mean",
    "syscall_rate_mean",
    "ts_deviation_requests",
    "ts_deviation_bandwidth",
    "out_degree",
    "in_degree",
    "fanout_ratio",
];

pub const CPU_FEATURE: usize = 4;

/// Packet-size histogram buckets: `floor(log2(mean bytes per packet))`,
/// saturating at 2^20.
pub const SIZE_BUCKETS: usize = 21;

pub const STD_FLOOR: f64 = 1e-6;

/// Rolling z-scores are clamped to `±DEVIATION_CLAMP`. With the std floor a
/// quiet device that sends its first flow after a silent baseline would
/// otherwise score ~1e5.
pub const DEVIATION_CLAMP: f64 = 10.0;

/// Telemetry stand-ins for devices that never reported any.
pub const DEFAULT_CPU_PCT: f64 = 10.0;
pub const DEFAULT_MEM_PCT: f64 = 20.0;
pub const DEFAULT_SYSCALL_RATE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub baseline_windows: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_s: 10.0,
            stride_s: 5.0,
            baseline_windows: 12,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::InvalidConfig("window_s must be positive".into()));
        }
        if !(self.stride_s > 0.0 && self.stride_s <= self.window_s) {
            return Err(Error::InvalidConfig(
                "stride_s must lie in (0, window_s]".into(),
            ));
        }
        if self.baseline_windows < 2 {
            return Err(Error::InvalidConfig("baseline_windows must be >= 2".into()));
        }
        Ok(())
    }

    pub fn window_start(&self, origin: f64, k: usize) -> f64 {
        origin + k as f64 * self.stride_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub device: String,
    pub window_start: f64,
    pub values: [f64; N_FEATURES],
    /// Window ground truth when the source flows were labeled.
    pub label: Option<TrafficLabel>,
}

impl FeatureVector {
    pub fn is_attack(&self) -> bool {
        self.label.is_some_and(TrafficLabel::is_attack)
    }

    pub fn cpu_pct(&self) -> f64 {
        self.values[CPU_FEATURE]
    }
}

/// Shannon entropy in bits of a histogram. Zero-count buckets are skipped; an
/// empty histogram has entropy 0.
pub fn shannon_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // -0.0 for the single-bucket case
    h.max(0.0)
}

pub fn size_bucket(mean_packet_size: f64) -> usize {
    if mean_packet_size < 1.0 {
        0
    } else {
        (mean_packet_size.log2().floor() as usize).min(SIZE_BUCKETS - 1)
    }
}

fn check_sorted<T>(items: &[T], ts: impl Fn(&T) -> f64, what: &str) -> Result<()> {
    match items.windows(2).position(|w| ts(&w[1]) < ts(&w[0])) {
        Some(i) => Err(Error::ContractViolation(format!(
            "{what} not sorted by timestamp at index {}",
            i + 1
        ))),
        None => Ok(()),
    }
}

/// Mean and population standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn deviation(current: f64, history: &[f64]) -> f64 {
    if history.len() < 2 {
        return 0.0;
    }
    let (mean, std) = mean_std(history);
    ((current - mean) / std.max(STD_FLOOR)).clamp(-DEVIATION_CLAMP, DEVIATION_CLAMP)
}

#[derive(Default)]
struct DeviceInput<'a> {
    flows: Vec<&'a FlowRecord>,
    telemetry: Vec<&'a DeviceTelemetry>,
}

/// Window indices `k` whose span contains `t`.
fn windows_containing(t: f64, origin: f64, wc: &WindowConfig) -> impl Iterator<Item = usize> + '_ {
    let rel = t - origin;
    let hi = (rel / wc.stride_s).floor().max(0.0) as usize;
    let lo = ((rel - wc.window_s) / wc.stride_s).floor().max(0.0) as usize;
    (lo..=hi).filter(move |&k| {
        let start = wc.window_start(origin, k);
        start <= t && t < start + wc.window_s
    })
}

fn window_label(flows: &[&FlowRecord], dataset_labeled: bool) -> Option<TrafficLabel> {
    let mut kinds: BTreeMap<AttackKind, usize> = BTreeMap::new();
    for f in flows {
        if let Some(TrafficLabel::Attack(k)) = f.label {
            *kinds.entry(k).or_default() += 1;
        }
    }
    // majority kind; ties go to the earlier kind
    let best = kinds
        .into_iter()
        .fold(None::<(AttackKind, usize)>, |acc, (k, n)| match acc {
            Some((_, m)) if m >= n => acc,
            _ => Some((k, n)),
        });
    match best {
        Some((k, _)) => Some(TrafficLabel::Attack(k)),
        None if dataset_labeled => Some(TrafficLabel::Benign),
        None => None,
    }
}

fn device_vectors(
    device: &str,
    input: &DeviceInput<'_>,
    origin: f64,
    wc: &WindowConfig,
    dataset_labeled: bool,
) -> Vec<FeatureVector> {
    let mut active = BTreeSet::new();
    for f in &input.flows {
        active.extend(windows_containing(f.timestamp, origin, wc));
    }
    for t in &input.telemetry {
        active.extend(windows_containing(t.timestamp, origin, wc));
    }

    let mut out = Vec::with_capacity(active.len());
    let mut req_hist: Vec<f64> = Vec::new();
    let mut bw_hist: Vec<f64> = Vec::new();
    for k in active {
        let start = wc.window_start(origin, k);
        let end = start + wc.window_s;
        let lo = input.flows.partition_point(|f| f.timestamp < start);
        let hi = input.flows.partition_point(|f| f.timestamp < end);
        let flows = &input.flows[lo..hi];

        let mut ports: HashMap<u16, u64> = HashMap::new();
        let mut sizes = [0u64; SIZE_BUCKETS];
        let mut bytes: u64 = 0;
        let mut out_peers = BTreeSet::new();
        let mut in_peers = BTreeSet::new();
        for f in flows {
            *ports.entry(f.dst_port).or_default() += 1;
            sizes[size_bucket(f.mean_packet_size())] += 1;
            bytes += f.byte_count;
            if f.src_device == device {
                out_peers.insert(f.dst_device.as_str());
            }
            if f.dst_device == device {
                in_peers.insert(f.src_device.as_str());
            }
        }
        let mut port_counts: Vec<u64> = ports.into_values().collect();
        // summation order must not depend on hash order
        port_counts.sort_unstable();

        let tlo = input.telemetry.partition_point(|t| t.timestamp < start);
        let thi = input.telemetry.partition_point(|t| t.timestamp < end);
        let samples = &input.telemetry[tlo..thi];
        let (cpu, mem, sys) = if !samples.is_empty() {
            let n = samples.len() as f64;
            (
                samples.iter().map(|t| t.cpu_pct).sum::<f64>() / n,
                samples.iter().map(|t| t.mem_pct).sum::<f64>() / n,
                samples.iter().map(|t| t.syscall_rate).sum::<f64>() / n,
            )
        } else if tlo > 0 {
            let last = input.telemetry[tlo - 1];
            (last.cpu_pct, last.mem_pct, last.syscall_rate)
        } else {
            (DEFAULT_CPU_PCT, DEFAULT_MEM_PCT, DEFAULT_SYSCALL_RATE)
        };

        let req = flows.len() as f64 / wc.window_s;
        let bw = bytes as f64 / wc.window_s;
        let dev_req = deviation(req, &req_hist);
        let dev_bw = deviation(bw, &bw_hist);
        req_hist.push(req);
        bw_hist.push(bw);
        if req_hist.len() > wc.baseline_windows {
            req_hist.remove(0);
            bw_hist.remove(0);
        }

        let out_deg = out_peers.len() as f64;
        let in_deg = in_peers.len() as f64;
        out.push(FeatureVector {
            device: device.to_string(),
            window_start: start,
            values: [
                shannon_entropy(&port_counts),
                shannon_entropy(&sizes),
                req,
                bw,
                cpu,
                mem,
                sys,
                dev_req,
                dev_bw,
                out_deg,
                in_deg,
                out_deg / (in_deg + 1.0),
            ],
            label: window_label(flows, dataset_labeled),
        });
    }
    out
}

/// Extracts one feature vector per (device, window) in which the device took
/// part in a flow or reported telemetry. Output is ordered by device id, then
/// window start. Inputs must already be sorted by timestamp.
pub fn extract(
    flows: &[FlowRecord],
    telemetry: &[DeviceTelemetry],
    wc: &WindowConfig,
) -> Result<Vec<FeatureVector>> {
    wc.validate()?;
    check_sorted(flows, |f| f.timestamp, "flows")?;
    check_sorted(telemetry, |t| t.timestamp, "telemetry")?;
    let origin = match (flows.first(), telemetry.first()) {
        (None, None) => return Ok(Vec::new()),
        (Some(f), None) => f.timestamp,
        (None, Some(t)) => t.timestamp,
        (Some(f), Some(t)) => f.timestamp.min(t.timestamp),
    };

    let mut per_device: BTreeMap<&str, DeviceInput<'_>> = BTreeMap::new();
    for f in flows {
        per_device
            .entry(f.src_device.as_str())
            .or_default()
            .flows
            .push(f);
        if f.dst_device != f.src_device {
            per_device
                .entry(f.dst_device.as_str())
                .or_default()
                .flows
                .push(f);
        }
    }
    for t in telemetry {
        per_device
            .entry(t.device.as_str())
            .or_default()
            .telemetry
            .push(t);
    }

    let labeled = flows.iter().any(|f| f.label.is_some());
    let devices: Vec<(&str, DeviceInput<'_>)> = per_device.into_iter().collect();
    let chunks: Vec<Vec<FeatureVector>> = devices
        .par_iter()
        .map(|(d, input)| device_vectors(d, input, origin, wc, labeled))
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Per-feature min/max captured from training vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub min: [f64; N_FEATURES],
    pub max: [f64; N_FEATURES],
}

impl NormStats {
    pub fn apply_one(&self, values: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| {
            let range = self.max[j] - self.min[j];
            if range > 0.0 {
                ((values[j] - self.min[j]) / range).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
    }
}

pub fn normalize_fit(vectors: &[FeatureVector]) -> Result<NormStats> {
    if vectors.is_empty() {
        return Err(Error::FitOnEmpty);
    }
    let mut min = [f64::INFINITY; N_FEATURES];
    let mut max = [f64::NEG_INFINITY; N_FEATURES];
    for v in vectors {
        for j in 0..N_FEATURES {
            min[j] = min[j].min(v.values[j]);
            max[j] = max[j].max(v.values[j]);
        }
    }
    Ok(NormStats { min, max })
}

pub fn normalize_apply(vectors: &[FeatureVector], stats: &NormStats) -> Vec<FeatureVector> {
    vectors
        .iter()
        .map(|v| FeatureVector {
            values: stats.apply_one(&v.values),
            ..v.clone()
        })
        .collect()
}

/// Chronological train/validation/test partition by window start time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSplit {
    pub train: f64,
    pub validation: f64,
}

impl Default for TimeSplit {
    fn default() -> Self {
        TimeSplit {
            train: 0.70,
            validation: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Validation,
    Test,
    All,
}

impl std::str::FromStr for SplitPart {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitPart::Train),
            "validation" | "val" => Ok(SplitPart::Validation),
            "test" => Ok(SplitPart::Test),
            "all" => Ok(SplitPart::All),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl TimeSplit {
    /// Window starts below `t_min + train·span` train, below
    /// `t_min + (train+validation)·span` validate, the rest test.
    pub fn select(&self, vectors: &[FeatureVector], part: SplitPart) -> Vec<FeatureVector> {
        if vectors.is_empty() || part == SplitPart::All {
            return vectors.to_vec();
        }
        let t_min = vectors.iter().map(|v| v.window_start).fold(f64::INFINITY, f64::min);
        let t_max = vectors
            .iter()
            .map(|v| v.window_start)
            .fold(f64::NEG_INFINITY, f64::max);
        let span = t_max - t_min;
        let c1 = t_min + self.train * span;
        let c2 = t_min + (self.train + self.validation) * span;
        vectors
            .iter()
            .filter(|v| {
                let t = v.window_start;
                match part {
                    SplitPart::Train => t < c1,
                    SplitPart::Validation => t >= c1 && t < c2,
                    SplitPart::Test => t >= c2,
                    SplitPart::All => true,
                }
            })
            .cloned()
            .collect()
    }
}

pub fn features_header() -> String {
    let mut h = String::from("device,window_start");
    for j in 0..N_FEATURES {
        let _ = write!(h, ",f{j}");
    }
    h.push_str(",label");
    h
}

pub fn write_features(vectors: &[FeatureVector], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", features_header()).map_err(io)?;
    for v in vectors {
        let mut line = format!("{},{}", v.device, v.window_start);
        for x in &v.values {
            let _ = write!(line, ",{x}");
        }
        let _ = write!(line, ",{}", label_cell(v.label));
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::ContractViolation(e.to_string()))?
        .clone();
    let expected = features_header();
    if headers.iter().collect::<Vec<_>>().join(",") != expected {
        return Err(Error::SchemaMismatch(format!(
            "features header must be `{expected}`"
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::ContractViolation(e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| Error::UnparsableRow { line, reason };
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("bad number `{}`", &row[i])))
        };
        let mut values = [0.0; N_FEATURES];
        for (j, v) in values.iter_mut().enumerate() {
            *v = num(2 + j)?;
        }
        out.push(FeatureVector {
            device: row[0].to_string(),
            window_start: num(1)?,
            values,
            label: parse_label_cell(&row[2 + N_FEATURES]).map_err(bad)?,
        });
    }
    Ok(out)
}
