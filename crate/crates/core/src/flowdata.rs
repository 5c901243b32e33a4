//! Traffic and telemetry records, the canonical CSV formats, and a
//! column-mapping adapter for externally exported flow datasets.
//!
//! Canonical flow header:
//!
//! ```text
//! timestamp,src_device,dst_device,protocol,dst_port,packet_count,byte_count,duration,syn_flag,label
//! ```
//!
//! Canonical telemetry header:
//!
//! ```text
//! timestamp,device,cpu_pct,mem_pct,syscall_rate
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result, RowError};
use crate::kv;

pub const FLOW_HEADER: &str =
    "timestamp,src_device,dst_device,protocol,dst_port,packet_count,byte_count,duration,syn_flag,label";
pub const TELEMETRY_HEADER: &str = "timestamp,device,cpu_pct,mem_pct,syscall_rate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Tcp,
    Udp,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Tcp => "TCP",
            Protocol::Udp => "UDP",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    /// Accepts the canonical names case-insensitively and IANA protocol
    /// numbers 6 and 17, which is how most flow exporters write them.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TCP" | "6" => Ok(Protocol::Tcp),
            "UDP" | "17" => Ok(Protocol::Udp),
            other => Err(format!("unsupported protocol `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    SynFlood,
    HttpFlood,
    UdpFlood,
    LowRate,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::SynFlood,
        AttackKind::HttpFlood,
        AttackKind::UdpFlood,
        AttackKind::LowRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::SynFlood => "syn_flood",
            AttackKind::HttpFlood => "http_flood",
            AttackKind::UdpFlood => "udp_flood",
            AttackKind::LowRate => "low_rate",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrafficClass {
    Benign,
    Attack,
}

/// Ground-truth label. The attack kind is present exactly when the class is
/// `Attack`, which the enum shape enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrafficLabel {
    Benign,
    Attack(AttackKind),
}

impl TrafficLabel {
    pub fn class(self) -> TrafficClass {
        match self {
            TrafficLabel::Benign => TrafficClass::Benign,
            TrafficLabel::Attack(_) => TrafficClass::Attack,
        }
    }

    pub fn attack_kind(self) -> Option<AttackKind> {
        match self {
            TrafficLabel::Benign => None,
            TrafficLabel::Attack(k) => Some(k),
        }
    }

    pub fn is_attack(self) -> bool {
        matches!(self, TrafficLabel::Attack(_))
    }
}

impl fmt::Display for TrafficLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrafficLabel::Benign => f.write_str("benign"),
            TrafficLabel::Attack(k) => f.write_str(k.as_str()),
        }
    }
}

impl FromStr for TrafficLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "benign" {
            Ok(TrafficLabel::Benign)
        } else {
            s.parse().map(TrafficLabel::Attack)
        }
    }
}

/// Parses the canonical label column, where an empty cell means unlabeled.
pub fn parse_label_cell(s: &str) -> std::result::Result<Option<TrafficLabel>, String> {
    let s = s.trim();
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

pub fn label_cell(label: Option<TrafficLabel>) -> String {
    label.map(|l| l.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    /// Seconds since the epoch (or since scenario start for synthetic data).
    pub timestamp: f64,
    pub src_device: String,
    pub dst_device: String,
    pub protocol: Protocol,
    pub dst_port: u16,
    pub packet_count: u64,
    pub byte_count: u64,
    pub duration: f64,
    pub syn_flag: bool,
    pub label: Option<TrafficLabel>,
}

impl FlowRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.timestamp.is_finite() {
            return Err("timestamp is not finite".into());
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(format!("duration {} is negative or not finite", self.duration));
        }
        if self.src_device.is_empty() || self.dst_device.is_empty() {
            return Err("empty device identifier".into());
        }
        if self.packet_count > 0 && self.byte_count < self.packet_count {
            return Err(format!(
                "byte_count {} smaller than packet_count {}",
                self.byte_count, self.packet_count
            ));
        }
        Ok(())
    }

    /// Mean bytes per packet, 0 for an empty flow.
    pub fn mean_packet_size(&self) -> f64 {
        if self.packet_count == 0 {
            0.0
        } else {
            self.byte_count as f64 / self.packet_count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTelemetry {
    pub timestamp: f64,
    pub device: String,
    pub cpu_pct: f64,
    pub mem_pct: f64,
    pub syscall_rate: f64,
}

impl DeviceTelemetry {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.timestamp.is_finite() {
            return Err("timestamp is not finite".into());
        }
        if self.device.is_empty() {
            return Err("empty device identifier".into());
        }
        if !(0.0..=100.0).contains(&self.cpu_pct) {
            return Err(format!("cpu_pct {} outside [0,100]", self.cpu_pct));
        }
        if !(0.0..=100.0).contains(&self.mem_pct) {
            return Err(format!("mem_pct {} outside [0,100]", self.mem_pct));
        }
        if !(self.syscall_rate >= 0.0 && self.syscall_rate.is_finite()) {
            return Err(format!("syscall_rate {} is negative", self.syscall_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestampFormat {
    EpochSeconds,
    EpochMicros,
    Iso8601,
}

impl FromStr for TimestampFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "epoch_seconds" | "seconds" => Ok(TimestampFormat::EpochSeconds),
            "epoch_micros" | "micros" => Ok(TimestampFormat::EpochMicros),
            "iso8601" => Ok(TimestampFormat::Iso8601),
            other => Err(format!("unknown timestamp format `{other}`")),
        }
    }
}

impl TimestampFormat {
    fn parse(self, raw: &str) -> std::result::Result<f64, String> {
        let raw = raw.trim();
        match self {
            TimestampFormat::EpochSeconds => raw
                .parse::<f64>()
                .map_err(|_| format!("bad timestamp `{raw}`")),
            TimestampFormat::EpochMicros => raw
                .parse::<i64>()
                .map(|us| us as f64 / 1e6)
                .map_err(|_| format!("bad timestamp `{raw}`")),
            TimestampFormat::Iso8601 => parse_iso8601(raw),
        }
    }
}

/// RFC 3339, or a naive `YYYY-MM-DD[ T]HH:MM:SS[.frac]` taken as UTC.
fn parse_iso8601(raw: &str) -> std::result::Result<f64, String> {
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp_micros() as f64 / 1e6);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(dt.and_utc().timestamp_micros() as f64 / 1e6);
        }
    }
    Err(format!("bad ISO-8601 timestamp `{raw}`"))
}

/// Canonical flow fields a mapping may point at.
pub const FLOW_FIELDS: [&str; 10] = [
    "timestamp",
    "src_device",
    "dst_device",
    "protocol",
    "dst_port",
    "packet_count",
    "byte_count",
    "duration",
    "syn_flag",
    "label",
];

const REQUIRED_FLOW_FIELDS: [&str; 6] = [
    "timestamp",
    "src_device",
    "dst_device",
    "protocol",
    "packet_count",
    "byte_count",
];

/// Maps canonical flow fields onto the columns of a foreign CSV export.
///
/// File form (`key=value` lines):
///
/// ```text
/// timestamp = Timestamp
/// src_device = Source IP
/// timestamp_format = iso8601
/// duration_unit = us
/// label.BENIGN = benign
/// label.Syn = syn_flood
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMapping {
    pub columns: BTreeMap<String, String>,
    pub timestamp_format: TimestampFormat,
    /// Multiplier turning the source duration column into seconds.
    pub duration_scale: f64,
    pub label_values: HashMap<String, TrafficLabel>,
}

impl ColumnMapping {
    pub fn new(
        columns: BTreeMap<String, String>,
        timestamp_format: TimestampFormat,
        label_values: HashMap<String, TrafficLabel>,
    ) -> Result<Self> {
        let m = ColumnMapping {
            columns,
            timestamp_format,
            duration_scale: 1.0,
            label_values,
        };
        m.check()?;
        Ok(m)
    }

    /// Identity mapping onto the canonical header.
    pub fn canonical() -> Self {
        ColumnMapping {
            columns: FLOW_FIELDS
                .iter()
                .map(|f| (f.to_string(), f.to_string()))
                .collect(),
            timestamp_format: TimestampFormat::EpochSeconds,
            duration_scale: 1.0,
            label_values: HashMap::new(),
        }
    }

    fn check(&self) -> Result<()> {
        for f in self.columns.keys() {
            if !FLOW_FIELDS.contains(&f.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown canonical field `{f}`")));
            }
        }
        for req in REQUIRED_FLOW_FIELDS {
            if !self.columns.contains_key(req) {
                return Err(Error::InvalidConfig(format!(
                    "mapping does not cover required field `{req}`"
                )));
            }
        }
        if !(self.duration_scale > 0.0 && self.duration_scale.is_finite()) {
            return Err(Error::InvalidConfig("duration scale must be positive".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = BTreeMap::new();
        let mut timestamp_format = TimestampFormat::EpochSeconds;
        let mut duration_scale = 1.0;
        let mut label_values = HashMap::new();
        for e in kv::parse(text)? {
            if let Some(src) = e.key.strip_prefix("label.") {
                let label = e.value.parse::<TrafficLabel>().map_err(|why| {
                    Error::InvalidConfig(format!("line {}: {why}", e.line))
                })?;
                label_values.insert(src.to_string(), label);
                continue;
            }
            match e.key.as_str() {
                "timestamp_format" => {
                    timestamp_format = e
                        .value
                        .parse()
                        .map_err(|why| Error::InvalidConfig(format!("line {}: {why}", e.line)))?;
                }
                "duration_unit" => {
                    duration_scale = match e.value.as_str() {
                        "s" => 1.0,
                        "ms" => 1e-3,
                        "us" => 1e-6,
                        other => {
                            return Err(Error::InvalidConfig(format!(
                                "line {}: unknown duration unit `{other}`",
                                e.line
                            )))
                        }
                    };
                }
                field => {
                    columns.insert(field.to_string(), e.value.clone());
                }
            }
        }
        let m = ColumnMapping {
            columns,
            timestamp_format,
            duration_scale,
            label_values,
        };
        m.check()?;
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Bad rows tolerated before ingestion aborts with `TooManyBadRows`.
    pub max_bad_rows: usize,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions { max_bad_rows: 100 }
    }
}

/// Successfully parsed records plus the rows that were rejected.
#[derive(Debug, Clone)]
pub struct Ingest<T> {
    pub records: Vec<T>,
    pub bad_rows: Vec<RowError>,
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn header_index(headers: &csv::StringRecord) -> HashMap<&str, usize> {
    headers.iter().enumerate().map(|(i, h)| (h, i)).collect()
}

struct BadRowSink {
    rows: Vec<RowError>,
    cap: usize,
}

impl BadRowSink {
    fn push(&mut self, line: u64, reason: String) -> Result<()> {
        self.rows.push(RowError { line, reason });
        if self.rows.len() > self.cap {
            return Err(Error::TooManyBadRows {
                count: self.rows.len(),
                first: self.rows[0].clone(),
            });
        }
        Ok(())
    }
}

fn sort_by_time<T>(records: &mut [T], ts: impl Fn(&T) -> f64) {
    records.sort_by(|a, b| ts(a).total_cmp(&ts(b)));
}

pub fn read_flows(path: &Path, mapping: Option<&ColumnMapping>) -> Result<Ingest<FlowRecord>> {
    read_flows_with(path, mapping, &ReadOptions::default())
}

pub fn read_flows_with(
    path: &Path,
    mapping: Option<&ColumnMapping>,
    opts: &ReadOptions,
) -> Result<Ingest<FlowRecord>> {
    let canonical = ColumnMapping::canonical();
    let mapping = mapping.unwrap_or(&canonical);
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::ContractViolation(format!("{}: {e}", path.display())))?
        .clone();
    let index = header_index(&headers);

    let mut cols: HashMap<&str, usize> = HashMap::new();
    for field in FLOW_FIELDS {
        if let Some(src) = mapping.columns.get(field) {
            let i = index
                .get(src.as_str())
                .ok_or_else(|| Error::MissingColumn(src.clone()))?;
            cols.insert(field, *i);
        }
    }

    let mut sink = BadRowSink {
        rows: Vec::new(),
        cap: opts.max_bad_rows,
    };
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                sink.push(line, e.to_string())?;
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_flow_row(&row, &cols, mapping) {
            Ok(rec) => records.push(rec),
            Err(reason) => sink.push(line, reason)?,
        }
    }
    sort_by_time(&mut records, |r| r.timestamp);
    Ok(Ingest {
        records,
        bad_rows: sink.rows,
    })
}

fn cell<'a>(
    row: &'a csv::StringRecord,
    cols: &HashMap<&str, usize>,
    field: &str,
) -> std::result::Result<Option<&'a str>, String> {
    match cols.get(field) {
        None => Ok(None),
        Some(&i) => row
            .get(i)
            .map(Some)
            .ok_or_else(|| format!("row too short for `{field}`")),
    }
}

fn parse_num<T: FromStr>(s: &str, field: &str) -> std::result::Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("bad {field} `{s}`"))
}

/// Counts exported as floats (`12.0`) are accepted when integral.
fn parse_count(s: &str, field: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = parse_num(s, field)?;
    if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("bad {field} `{s}`"))
    }
}

fn parse_flag(s: &str) -> std::result::Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "false" | "" => Ok(false),
        "1" | "true" => Ok(true),
        other => other
            .parse::<f64>()
            .map(|v| v > 0.0)
            .map_err(|_| format!("bad syn_flag `{other}`")),
    }
}

fn parse_flow_row(
    row: &csv::StringRecord,
    cols: &HashMap<&str, usize>,
    mapping: &ColumnMapping,
) -> std::result::Result<FlowRecord, String> {
    let req = |f: &str| cell(row, cols, f)?.ok_or_else(|| format!("missing `{f}`"));
    let timestamp = mapping.timestamp_format.parse(req("timestamp")?)?;
    let src_device = req("src_device")?.to_string();
    let dst_device = req("dst_device")?.to_string();
    let protocol = req("protocol")?.parse::<Protocol>()?;
    let dst_port = match cell(row, cols, "dst_port")? {
        Some(s) => parse_count(s, "dst_port")
            .and_then(|v| u16::try_from(v).map_err(|_| format!("dst_port {v} out of range")))?,
        None => 0,
    };
    let packet_count = parse_count(req("packet_count")?, "packet_count")?;
    let byte_count = parse_count(req("byte_count")?, "byte_count")?;
    let duration = match cell(row, cols, "duration")? {
        Some(s) => parse_num::<f64>(s, "duration")? * mapping.duration_scale,
        None => 0.0,
    };
    let syn_flag = match cell(row, cols, "syn_flag")? {
        Some(s) => parse_flag(s)?,
        None => false,
    };
    let label = match cell(row, cols, "label")? {
        None => None,
        Some(s) if mapping.label_values.is_empty() => parse_label_cell(s)?,
        Some(s) => {
            let s = s.trim();
            if s.is_empty() {
                None
            } else {
                Some(
                    *mapping
                        .label_values
                        .get(s)
                        .ok_or_else(|| format!("unmapped label `{s}`"))?,
                )
            }
        }
    };
    let rec = FlowRecord {
        timestamp,
        src_device,
        dst_device,
        protocol,
        dst_port,
        packet_count,
        byte_count,
        duration,
        syn_flag,
        label,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn read_telemetry(path: &Path) -> Result<Ingest<DeviceTelemetry>> {
    read_telemetry_with(path, &ReadOptions::default())
}

pub fn read_telemetry_with(path: &Path, opts: &ReadOptions) -> Result<Ingest<DeviceTelemetry>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::ContractViolation(format!("{}: {e}", path.display())))?
        .clone();
    let index = header_index(&headers);
    let mut cols = HashMap::new();
    for field in TELEMETRY_HEADER.split(',') {
        let i = *index
            .get(field)
            .ok_or_else(|| Error::MissingColumn(field.to_string()))?;
        cols.insert(field, i);
    }

    let mut sink = BadRowSink {
        rows: Vec::new(),
        cap: opts.max_bad_rows,
    };
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                sink.push(line, e.to_string())?;
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parsed = (|| -> std::result::Result<DeviceTelemetry, String> {
            let req = |f: &str| cell(&row, &cols, f)?.ok_or_else(|| format!("missing `{f}`"));
            let t = DeviceTelemetry {
                timestamp: parse_num(req("timestamp")?, "timestamp")?,
                device: req("device")?.to_string(),
                cpu_pct: parse_num(req("cpu_pct")?, "cpu_pct")?,
                mem_pct: parse_num(req("mem_pct")?, "mem_pct")?,
                syscall_rate: parse_num(req("syscall_rate")?, "syscall_rate")?,
            };
            t.validate()?;
            Ok(t)
        })();
        match parsed {
            Ok(t) => records.push(t),
            Err(reason) => sink.push(line, reason)?,
        }
    }
    sort_by_time(&mut records, |r| r.timestamp);
    Ok(Ingest {
        records,
        bad_rows: sink.rows,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Floats use Rust's shortest round-trip formatting, so `read_flows`
/// reproduces every field exactly.
pub fn write_flows(records: &[FlowRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{FLOW_HEADER}").map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.timestamp,
            r.src_device,
            r.dst_device,
            r.protocol,
            r.dst_port,
            r.packet_count,
            r.byte_count,
            r.duration,
            u8::from(r.syn_flag),
            label_cell(r.label)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_telemetry(records: &[DeviceTelemetry], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{TELEMETRY_HEADER}").map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.timestamp, r.device, r.cpu_pct, r.mem_pct, r.syscall_rate
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
