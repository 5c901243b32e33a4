//! Synthetic IoT fleet traffic with injected DDoS attacks.
//!
//! Benign devices emit flows as a Poisson process whose rate follows a
//! sinusoidal day cycle compressed onto the scenario duration. Half of the
//! fleet is "monitor"-like (chatty, larger flows), half "pump"-like (quiet).
//! Every device talks to a small fixed set of peers. Attack processes run on
//! top and carry attack labels; all benign flows are labeled benign.
//!
//! One ChaCha stream seeded from `ScenarioConfig::seed` drives everything, so
//! a config fully determines the output.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};

use crate::error::{Error, Result};
use crate::flowdata::{AttackKind, DeviceTelemetry, FlowRecord, Protocol, TrafficLabel};
use crate::kv;

#[derive(Debug, Clone, PartialEq)]
pub struct PortPreference {
    pub port: u16,
    pub protocol: Protocol,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    /// Mean seconds between flows of an average device. Ignored when the
    /// scenario sets `target_events`, which fixes the rate instead.
    pub mean_event_interval_s: f64,
    pub mean_packets_per_flow: f64,
    pub mean_bytes_per_packet: f64,
    pub port_preference: Vec<PortPreference>,
    pub cpu_baseline_pct: f64,
    pub mem_baseline_pct: f64,
    pub diurnal_amplitude: f64,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        let p = |port, protocol, weight| PortPreference {
            port,
            protocol,
            weight,
        };
        DeviceProfile {
            mean_event_interval_s: 6.0,
            mean_packets_per_flow: 8.0,
            mean_bytes_per_packet: 220.0,
            port_preference: vec![
                p(443, Protocol::Tcp, 0.35),
                p(1883, Protocol::Tcp, 0.25),
                p(8883, Protocol::Tcp, 0.10),
                p(5683, Protocol::Udp, 0.20),
                p(123, Protocol::Udp, 0.10),
            ],
            cpu_baseline_pct: 18.0,
            mem_baseline_pct: 35.0,
            diurnal_amplitude: 0.3,
        }
    }
}

impl DeviceProfile {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        if !(self.mean_event_interval_s > 0.0) {
            return bad("mean_event_interval_s must be > 0");
        }
        if !(self.mean_packets_per_flow >= 1.0) {
            return bad("mean_packets_per_flow must be >= 1");
        }
        if !(self.mean_bytes_per_packet >= 1.0) {
            return bad("mean_bytes_per_packet must be >= 1");
        }
        if self.port_preference.is_empty()
            || self.port_preference.iter().any(|p| !(p.weight > 0.0))
        {
            return bad("port_preference needs at least one positive weight");
        }
        if !(0.0..=100.0).contains(&self.cpu_baseline_pct)
            || !(0.0..=100.0).contains(&self.mem_baseline_pct)
        {
            return bad("resource baselines must lie in [0,100]");
        }
        if !(0.0..1.0).contains(&self.diurnal_amplitude) {
            return bad("diurnal_amplitude must lie in [0,1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub start_s: f64,
    pub end_s: f64,
    pub attacker_devices: Vec<String>,
    pub victim_device: String,
    /// Per-attacker average flow rate as a multiple of the fleet's mean
    /// benign rate.
    pub intensity: f64,
    /// Pulse spacing for `LowRate`.
    pub low_rate_period_s: Option<f64>,
}

impl AttackSpec {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s
    }

    fn to_line(&self) -> String {
        let mut s = format!(
            "kind={} start={} end={} attackers={} victim={} intensity={}",
            self.kind,
            self.start_s,
            self.end_s,
            self.attacker_devices.join(","),
            self.victim_device,
            self.intensity
        );
        if let Some(p) = self.low_rate_period_s {
            let _ = write!(s, " period={p}");
        }
        s
    }

    fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let mut kind = None;
        let (mut start, mut end, mut intensity, mut period) = (None, None, None, None);
        let mut attackers = Vec::new();
        let mut victim = None;
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{tok}`"))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number `{v}`"));
            match k {
                "kind" => kind = Some(v.parse::<AttackKind>()?),
                "start" => start = Some(num(v)?),
                "end" => end = Some(num(v)?),
                "intensity" => intensity = Some(num(v)?),
                "period" => period = Some(num(v)?),
                "victim" => victim = Some(v.to_string()),
                "attackers" => attackers = v.split(',').map(str::to_string).collect(),
                other => return Err(format!("unknown attack key `{other}`")),
            }
        }
        Ok(AttackSpec {
            kind: kind.ok_or("attack needs kind")?,
            start_s: start.ok_or("attack needs start")?,
            end_s: end.ok_or("attack needs end")?,
            attacker_devices: attackers,
            victim_device: victim.ok_or("attack needs victim")?,
            intensity: intensity.ok_or("attack needs intensity")?,
            low_rate_period_s: period,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_devices: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub benign_profile: DeviceProfile,
    pub attacks: Vec<AttackSpec>,
    pub target_events: Option<usize>,
    pub telemetry_hz: f64,
    pub peers_per_device: usize,
}

pub fn device_name(i: usize, n_devices: usize) -> String {
    let width = (n_devices.saturating_sub(1)).to_string().len().max(3);
    format!("dev{i:0width$}")
}

fn devs(n: usize, range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|i| device_name(i, n)).collect()
}

fn attack(
    kind: AttackKind,
    window: (f64, f64),
    attackers: std::ops::Range<usize>,
    victim: usize,
    intensity: f64,
) -> AttackSpec {
    AttackSpec {
        kind,
        start_s: window.0,
        end_s: window.1,
        attacker_devices: devs(100, attackers),
        victim_device: device_name(victim, 100),
        intensity,
        low_rate_period_s: (kind == AttackKind::LowRate).then_some(LOW_RATE_PERIOD_S),
    }
}

pub const FLOOD_INTENSITY: f64 = 20.0;
pub const LOW_RATE_INTENSITY: f64 = 10.0;
pub const LOW_RATE_PERIOD_S: f64 = 10.0;

impl Default for ScenarioConfig {
    /// 100 devices, 600 s, ~10,000 flows, with every attack kind injected in
    /// each of the first 70%, next 15% and last 15% of the timeline.
    fn default() -> Self {
        use AttackKind::*;
        let f = FLOOD_INTENSITY;
        let l = LOW_RATE_INTENSITY;
        ScenarioConfig {
            attacks: vec![
                attack(SynFlood, (40.0, 80.0), 10..15, 50, f),
                attack(UdpFlood, (110.0, 150.0), 15..20, 51, f),
                attack(HttpFlood, (180.0, 220.0), 20..25, 52, f),
                attack(LowRate, (250.0, 400.0), 25..30, 53, l),
                attack(SynFlood, (430.0, 460.0), 30..35, 54, f),
                attack(LowRate, (440.0, 500.0), 35..40, 55, l),
                attack(HttpFlood, (470.0, 500.0), 40..45, 56, f),
                attack(UdpFlood, (430.0, 460.0), 45..50, 57, f),
                attack(SynFlood, (520.0, 550.0), 60..65, 70, f),
                attack(UdpFlood, (555.0, 590.0), 65..70, 71, f),
                attack(HttpFlood, (520.0, 560.0), 72..77, 78, f),
                attack(LowRate, (515.0, 595.0), 80..85, 85, l),
            ],
            ..ScenarioConfig::benign(42)
        }
    }
}

impl ScenarioConfig {
    /// The default fleet with no attacks.
    pub fn benign(seed: u64) -> Self {
        ScenarioConfig {
            n_devices: 100,
            duration_s: 600.0,
            seed,
            benign_profile: DeviceProfile::default(),
            attacks: Vec::new(),
            target_events: Some(10_000),
            telemetry_hz: 1.0,
            peers_per_device: 3,
        }
    }

    /// Two concurrent low-rate pulse attacks after a benign lead-in.
    pub fn low_rate_only(seed: u64) -> Self {
        let l = LOW_RATE_INTENSITY;
        ScenarioConfig {
            attacks: vec![
                attack(AttackKind::LowRate, (200.0, 500.0), 10..15, 50, l),
                attack(AttackKind::LowRate, (250.0, 550.0), 20..25, 60, l),
            ],
            ..ScenarioConfig::benign(seed)
        }
    }

    pub fn device_names(&self) -> Vec<String> {
        (0..self.n_devices)
            .map(|i| device_name(i, self.n_devices))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.n_devices < 2 {
            return bad("n_devices must be >= 2".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be positive".into());
        }
        if !(self.telemetry_hz > 0.0) {
            return bad("telemetry_hz must be positive".into());
        }
        if self.peers_per_device == 0 || self.peers_per_device >= self.n_devices {
            return bad("peers_per_device must lie in [1, n_devices)".into());
        }
        if self.target_events == Some(0) {
            return bad("target_events must be positive".into());
        }
        self.benign_profile.validate()?;
        let names: BTreeSet<String> = self.device_names().into_iter().collect();
        for (i, a) in self.attacks.iter().enumerate() {
            if !(a.start_s < a.end_s) {
                return bad(format!("attack {i}: start must precede end"));
            }
            if a.start_s < 0.0 || a.end_s > self.duration_s {
                return bad(format!("attack {i}: window outside [0, duration_s]"));
            }
            if !(a.intensity > 0.0) {
                return bad(format!("attack {i}: intensity must be > 0"));
            }
            if a.kind == AttackKind::LowRate && !a.low_rate_period_s.is_some_and(|p| p > 0.0) {
                return bad(format!("attack {i}: low_rate needs period > 0"));
            }
            if a.attacker_devices.is_empty() {
                return bad(format!("attack {i}: no attackers"));
            }
            for d in a.attacker_devices.iter().chain([&a.victim_device]) {
                if !names.contains(d) {
                    return bad(format!("attack {i}: unknown device `{d}`"));
                }
            }
            if a.attacker_devices.contains(&a.victim_device) {
                return bad(format!("attack {i}: victim is also an attacker"));
            }
        }
        Ok(())
    }

    /// Reads `key=value` overrides on top of the default scenario. Repeated
    /// `attack` keys replace the default attack list; `attack=none` clears it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut attacks: Option<Vec<AttackSpec>> = None;
        for e in kv::parse(text)? {
            let p = &mut cfg.benign_profile;
            match e.key.as_str() {
                "n_devices" => cfg.n_devices = kv::parse_num(&e)?,
                "duration_s" => cfg.duration_s = kv::parse_num(&e)?,
                "seed" => cfg.seed = kv::parse_num(&e)?,
                "target_events" => {
                    cfg.target_events = if e.value == "none" {
                        None
                    } else {
                        Some(kv::parse_num(&e)?)
                    }
                }
                "telemetry_hz" => cfg.telemetry_hz = kv::parse_num(&e)?,
                "peers_per_device" => cfg.peers_per_device = kv::parse_num(&e)?,
                "mean_event_interval_s" => p.mean_event_interval_s = kv::parse_num(&e)?,
                "mean_packets_per_flow" => p.mean_packets_per_flow = kv::parse_num(&e)?,
                "mean_bytes_per_packet" => p.mean_bytes_per_packet = kv::parse_num(&e)?,
                "cpu_baseline_pct" => p.cpu_baseline_pct = kv::parse_num(&e)?,
                "mem_baseline_pct" => p.mem_baseline_pct = kv::parse_num(&e)?,
                "diurnal_amplitude" => p.diurnal_amplitude = kv::parse_num(&e)?,
                "ports" => p.port_preference = parse_ports(&e.value).map_err(|m| {
                    Error::InvalidConfig(format!("line {}: {m}", e.line))
                })?,
                "attack" => {
                    let list = attacks.get_or_insert_with(Vec::new);
                    if e.value != "none" {
                        list.push(AttackSpec::parse_line(&e.value).map_err(|m| {
                            Error::InvalidConfig(format!("line {}: {m}", e.line))
                        })?);
                    }
                }
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: unknown scenario key `{other}`",
                        e.line
                    )))
                }
            }
        }
        if let Some(a) = attacks {
            cfg.attacks = a;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// `443/tcp:0.4,5683/udp:0.2`
fn parse_ports(s: &str) -> std::result::Result<Vec<PortPreference>, String> {
    s.split(',')
        .map(|item| {
            let (pp, w) = item
                .split_once(':')
                .ok_or_else(|| format!("bad port entry `{item}`"))?;
            let (port, proto) = pp
                .split_once('/')
                .ok_or_else(|| format!("bad port entry `{item}`"))?;
            Ok(PortPreference {
                port: port.trim().parse().map_err(|_| format!("bad port `{port}`"))?,
                protocol: proto.parse()?,
                weight: w.trim().parse().map_err(|_| format!("bad weight `{w}`"))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DeviceClass {
    Monitor,
    Pump,
}

impl DeviceClass {
    fn of(index: usize) -> Self {
        if index % 2 == 0 {
            DeviceClass::Monitor
        } else {
            DeviceClass::Pump
        }
    }

    /// (rate, packets, bytes/packet, cpu, mem) multipliers; rates average to 1.
    fn multipliers(self) -> (f64, f64, f64, f64, f64) {
        match self {
            DeviceClass::Monitor => (1.5, 1.5, 1.3, 1.4, 1.2),
            DeviceClass::Pump => (0.5, 0.6, 0.6, 0.6, 0.8),
        }
    }
}

struct Device {
    name: String,
    class: DeviceClass,
    peers: Vec<usize>,
    /// Per-device heterogeneity factor on rate and resource baselines.
    jitter: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticTrace {
    pub flows: Vec<FlowRecord>,
    pub telemetry: Vec<DeviceTelemetry>,
    /// Mean benign flows per device per second actually used.
    pub benign_rate: f64,
}

impl SyntheticTrace {
    pub fn attack_flow_count(&self) -> usize {
        self.flows
            .iter()
            .filter(|f| f.label.is_some_and(TrafficLabel::is_attack))
            .count()
    }
}

fn round_us(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

fn pulse_width(period: f64) -> f64 {
    (0.1 * period).min(1.0)
}

fn pulse_starts(a: &AttackSpec) -> Vec<f64> {
    let period = a.low_rate_period_s.unwrap_or(1.0);
    let mut out = Vec::new();
    let mut j = 0usize;
    loop {
        let t = a.start_s + j as f64 * period;
        if t >= a.end_s {
            break;
        }
        out.push(t);
        j += 1;
    }
    out
}

fn burst_size(a: &AttackSpec, rate: f64) -> usize {
    let period = a.low_rate_period_s.unwrap_or(1.0);
    ((a.intensity * rate * period).round() as usize).max(1)
}

/// Attack flows per unit of benign rate, used to size the benign rate so the
/// total lands near `target_events`.
fn attack_weight(a: &AttackSpec) -> f64 {
    let n = a.attacker_devices.len() as f64;
    match a.kind {
        AttackKind::LowRate => {
            let period = a.low_rate_period_s.unwrap_or(1.0);
            n * a.intensity * period * pulse_starts(a).len() as f64
        }
        _ => n * a.intensity * (a.end_s - a.start_s),
    }
}

/// Peer lists in which every device is also the peer of exactly `k`
/// others: devices are placed on a shuffled ring and each one talks to the
/// devices `k` distinct random offsets ahead of it.
fn peer_graph(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut ring: Vec<usize> = (0..n).collect();
    ring.shuffle(rng);
    let mut offsets: Vec<usize> = (1..n).collect();
    offsets.shuffle(rng);
    offsets.truncate(k);
    let mut slot = vec![0; n];
    for (pos, &dev) in ring.iter().enumerate() {
        slot[dev] = pos;
    }
    (0..n)
        .map(|i| {
            let mut p: Vec<usize> = offsets.iter().map(|o| ring[(slot[i] + o) % n]).collect();
            p.sort_unstable();
            p
        })
        .collect()
}

pub fn generate(config: &ScenarioConfig) -> Result<SyntheticTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_devices;
    let d = config.duration_s;
    let profile = &config.benign_profile;

    let rate = match config.target_events {
        Some(target) => {
            let attack: f64 = config.attacks.iter().map(attack_weight).sum();
            target as f64 / (n as f64 * d + attack)
        }
        None => 1.0 / profile.mean_event_interval_s,
    };

    let index: HashMap<String, usize> = (0..n).map(|i| (device_name(i, n), i)).collect();
    let peers = peer_graph(n, config.peers_per_device, &mut rng);
    let devices: Vec<Device> = peers
        .into_iter()
        .enumerate()
        .map(|(i, peers)| Device {
            name: device_name(i, n),
            class: DeviceClass::of(i),
            peers,
            jitter: rng.random_range(0.8..1.2),
        })
        .collect();

    let mut flows = Vec::new();
    let port_weights: Vec<f64> = profile.port_preference.iter().map(|p| p.weight).collect();
    let port_dist = rand::distr::weighted::WeightedIndex::new(&port_weights)
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let size_noise = LogNormal::new(0.0, 0.25).expect("valid lognormal");
    let amp = profile.diurnal_amplitude;
    let diurnal = |t: f64| 1.0 + amp * (2.0 * PI * t / d).sin();

    for dev in &devices {
        let (rm, pm, bm, _, _) = dev.class.multipliers();
        let lam = rate * rm * dev.jitter;
        let lam_max = lam * (1.0 + amp);
        let gap = Exp::new(lam_max).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= d {
                break;
            }
            // thinning for the day-cycle modulated rate
            if rng.random::<f64>() * (1.0 + amp) > diurnal(t) {
                continue;
            }
            let pref = &profile.port_preference[port_dist.sample(&mut rng)];
            let mean_pk = (profile.mean_packets_per_flow * pm).max(1.0);
            let packets = if mean_pk > 1.0 {
                1 + Exp::new(1.0 / (mean_pk - 1.0))
                    .expect("positive")
                    .sample(&mut rng)
                    .floor() as u64
            } else {
                1
            };
            let bpp = (profile.mean_bytes_per_packet * bm * size_noise.sample(&mut rng)).max(40.0);
            let peer = *dev.peers.choose(&mut rng).expect("peers");
            flows.push(FlowRecord {
                timestamp: round_us(t),
                src_device: dev.name.clone(),
                dst_device: devices[peer].name.clone(),
                protocol: pref.protocol,
                dst_port: pref.port,
                packet_count: packets,
                byte_count: (packets as f64 * bpp).round() as u64,
                duration: round_us(Exp::new(1.0).expect("positive").sample(&mut rng)
                    * (packets as f64).sqrt()),
                syn_flag: pref.protocol == Protocol::Tcp && rng.random_bool(0.3),
                label: Some(TrafficLabel::Benign),
            });
        }
    }

    for a in &config.attacks {
        emit_attack(a, rate, &mut rng, &mut flows);
    }
    flows.sort_by(|x, y| x.timestamp.total_cmp(&y.timestamp));

    let telemetry = telemetry_for(config, &devices, &index, &flows, &mut rng);
    Ok(SyntheticTrace {
        flows,
        telemetry,
        benign_rate: rate,
    })
}

fn attack_flow(a: &AttackSpec, attacker: &str, t: f64, rng: &mut ChaCha8Rng) -> FlowRecord {
    let (protocol, dst_port, packets, bpp, duration, syn) = match a.kind {
        AttackKind::SynFlood => (
            Protocol::Tcp,
            if rng.random_bool(0.5) { 80 } else { 443 },
            1,
            60.0,
            0.0,
            true,
        ),
        AttackKind::HttpFlood => (
            Protocol::Tcp,
            if rng.random_bool(0.7) { 80 } else { 443 },
            rng.random_range(3..=6),
            rng.random_range(90.0..160.0),
            rng.random_range(0.01..0.08),
            true,
        ),
        AttackKind::UdpFlood => (
            Protocol::Udp,
            rng.random_range(1024..=65535),
            rng.random_range(20..=50),
            rng.random_range(1200.0..1472.0),
            rng.random_range(0.05..0.5),
            false,
        ),
        AttackKind::LowRate => (
            Protocol::Tcp,
            80,
            rng.random_range(2..=4),
            rng.random_range(90.0..130.0),
            rng.random_range(0.2..0.6),
            true,
        ),
    };
    FlowRecord {
        timestamp: round_us(t),
        src_device: attacker.to_string(),
        dst_device: a.victim_device.clone(),
        protocol,
        dst_port,
        packet_count: packets,
        byte_count: (packets as f64 * bpp).round() as u64,
        duration: round_us(duration),
        syn_flag: syn,
        label: Some(TrafficLabel::Attack(a.kind)),
    }
}

fn emit_attack(a: &AttackSpec, rate: f64, rng: &mut ChaCha8Rng, out: &mut Vec<FlowRecord>) {
    match a.kind {
        AttackKind::LowRate => {
            let period = a.low_rate_period_s.unwrap_or(1.0);
            let width = pulse_width(period);
            let burst = burst_size(a, rate);
            for p in pulse_starts(a) {
                for attacker in &a.attacker_devices {
                    for _ in 0..burst {
                        let t = (p + rng.random::<f64>() * width).min(a.end_s);
                        out.push(attack_flow(a, attacker, t, rng));
                    }
                }
            }
        }
        _ => {
            let gap = Exp::new(a.intensity * rate).expect("positive rate");
            for attacker in &a.attacker_devices {
                let mut t = a.start_s;
                loop {
                    t += gap.sample(rng);
                    if t >= a.end_s {
                        break;
                    }
                    out.push(attack_flow(a, attacker, t, rng));
                }
            }
        }
    }
}

/// Per-second resource samples. CPU on attacker and victim devices sits at
/// `min(95, baseline + 0.5·intensity)` while an attack is running; memory
/// gains `0.25·intensity`; the syscall rate tracks the number of flows the
/// device took part in during the preceding second.
fn telemetry_for(
    config: &ScenarioConfig,
    devices: &[Device],
    index: &HashMap<String, usize>,
    flows: &[FlowRecord],
    rng: &mut ChaCha8Rng,
) -> Vec<DeviceTelemetry> {
    let d = config.duration_s;
    let profile = &config.benign_profile;
    let ticks = (d * config.telemetry_hz).floor() as usize;
    let dt = 1.0 / config.telemetry_hz;

    // flows touching each device per tick interval [t - dt, t)
    let mut activity: HashMap<(usize, usize), u32> = HashMap::new();
    for f in flows {
        let bin = (f.timestamp / dt).floor() as usize + 1;
        for name in [&f.src_device, &f.dst_device] {
            if let Some(&i) = index.get(name.as_str()) {
                *activity.entry((i, bin)).or_default() += 1;
            }
        }
    }

    let cpu_noise = Normal::new(0.0, 1.5).expect("valid normal");
    let mem_noise = Normal::new(0.0, 0.8).expect("valid normal");
    let sys_noise = Normal::new(0.0, 5.0).expect("valid normal");
    let mut out = Vec::with_capacity(ticks * devices.len());
    for k in 0..ticks {
        let t = k as f64 * dt;
        let day = (2.0 * PI * t / d).sin();
        for (i, dev) in devices.iter().enumerate() {
            let (_, _, _, cm, mm) = dev.class.multipliers();
            let cpu_base = profile.cpu_baseline_pct * cm * dev.jitter;
            let mem_base = profile.mem_baseline_pct * mm * dev.jitter;
            let load: f64 = config
                .attacks
                .iter()
                .filter(|a| {
                    a.contains(t)
                        && (a.victim_device == dev.name || a.attacker_devices.contains(&dev.name))
                })
                .map(|a| a.intensity)
                .sum();
            let cpu_level = if load > 0.0 {
                (cpu_base + 0.5 * load).min(95.0)
            } else {
                cpu_base + 2.0 * day
            };
            let mem_level = mem_base + 0.25 * load;
            let touched = activity.get(&(i, k)).copied().unwrap_or(0) as f64;
            out.push(DeviceTelemetry {
                timestamp: t,
                device: dev.name.clone(),
                cpu_pct: round_us((cpu_level + cpu_noise.sample(rng)).clamp(0.0, 100.0)),
                mem_pct: round_us((mem_level + mem_noise.sample(rng)).clamp(0.0, 100.0)),
                syscall_rate: round_us((40.0 + 15.0 * touched + sys_noise.sample(rng)).max(0.0)),
            });
        }
    }
    out
}

/// True exactly where a flow carries `spec.kind` and falls inside the attack
/// window.
pub fn attack_mask(flows: &[FlowRecord], spec: &AttackSpec) -> Vec<bool> {
    flows
        .iter()
        .map(|f| f.label == Some(TrafficLabel::Attack(spec.kind)) && spec.contains(f.timestamp))
        .collect()
}

pub fn write_meta(config: &ScenarioConfig, trace: &SyntheticTrace, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "seed={}", config.seed);
    let _ = writeln!(s, "n_devices={}", config.n_devices);
    let _ = writeln!(s, "duration_s={}", config.duration_s);
    let _ = writeln!(
        s,
        "target_events={}",
        config
            .target_events
            .map_or_else(|| "none".to_string(), |t| t.to_string())
    );
    let _ = writeln!(s, "flows={}", trace.flows.len());
    let _ = writeln!(s, "attack_flows={}", trace.attack_flow_count());
    let _ = writeln!(s, "telemetry_samples={}", trace.telemetry.len());
    let _ = writeln!(s, "benign_rate={}", trace.benign_rate);
    for a in &config.attacks {
        let _ = writeln!(s, "attack={}", a.to_line());
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_attacks_means_all_benign() {
        let t = generate(&ScenarioConfig::benign(3)).unwrap();
        assert!(t.flows.iter().all(|f| f.label == Some(TrafficLabel::Benign)));
        assert_eq!(t.attack_flow_count(), 0);
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = ScenarioConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.flows, b.flows);
        assert_eq!(a.telemetry, b.telemetry);
        let c = generate(&ScenarioConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.flows, c.flows);
    }

    #[test]
    fn event_budget_and_validity() {
        for cfg in [ScenarioConfig::default(), ScenarioConfig::benign(9)] {
            let t = generate(&cfg).unwrap();
            let n = t.flows.len() as f64;
            assert!((n - 10_000.0).abs() <= 1_000.0, "{n}");
            assert!(t.flows.iter().all(|f| f.validate().is_ok()));
            assert!(t.telemetry.iter().all(|x| x.validate().is_ok()));
            assert_eq!(t.telemetry.len(), 100 * 600);
        }
    }

    #[test]
    fn labels_follow_provenance() {
        let cfg = ScenarioConfig::default();
        let t = generate(&cfg).unwrap();
        for f in &t.flows {
            if let Some(TrafficLabel::Attack(kind)) = f.label {
                let owner = cfg.attacks.iter().find(|a| {
                    a.kind == kind
                        && a.contains(f.timestamp)
                        && a.victim_device == f.dst_device
                        && a.attacker_devices.contains(&f.src_device)
                });
                assert!(owner.is_some(), "orphan attack flow {f:?}");
            }
        }
    }

    #[test]
    fn victim_cpu_is_elevated_during_attack() {
        let cfg = ScenarioConfig::default();
        let t = generate(&cfg).unwrap();
        let a = &cfg.attacks[0];
        let mean = |inside: bool| {
            let xs: Vec<f64> = t
                .telemetry
                .iter()
                .filter(|s| s.device == a.victim_device && a.contains(s.timestamp) == inside)
                .map(|s| s.cpu_pct)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mean(true) > mean(false) + 0.4 * a.intensity);
    }

    #[test]
    fn invalid_scenarios() {
        let mut c = ScenarioConfig::benign(1);
        c.n_devices = 1;
        assert!(matches!(generate(&c), Err(Error::InvalidScenario(_))));

        let mut c = ScenarioConfig::default();
        c.attacks[0].end_s = 10_000.0;
        assert!(matches!(generate(&c), Err(Error::InvalidScenario(_))));

        let mut c = ScenarioConfig::default();
        c.attacks[3].low_rate_period_s = None;
        assert!(matches!(generate(&c), Err(Error::InvalidScenario(_))));

        let mut c = ScenarioConfig::default();
        c.attacks[0].intensity = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mask_examples() {
        let cfg = ScenarioConfig::default();
        let t = generate(&cfg).unwrap();
        let benign = generate(&ScenarioConfig::benign(5)).unwrap();
        assert!(attack_mask(&benign.flows, &cfg.attacks[0]).iter().all(|m| !m));

        let spec = &cfg.attacks[1];
        let k = t
            .flows
            .iter()
            .filter(|f| {
                f.label == Some(TrafficLabel::Attack(spec.kind))
                    && f.timestamp >= spec.start_s
                    && f.timestamp <= spec.end_s
            })
            .count();
        let mask = attack_mask(&t.flows, spec);
        assert!(k > 0);
        assert_eq!(mask.iter().filter(|&&m| m).count(), k);

        let far = AttackSpec {
            start_s: 10_000.0,
            end_s: 20_000.0,
            ..spec.clone()
        };
        assert!(attack_mask(&t.flows, &far).iter().all(|m| !m));
    }

    #[test]
    fn config_file_overrides() {
        let cfg = ScenarioConfig::parse(
            "seed=7\nn_devices=20\nduration_s=120\ntarget_events=none\n\
             ports=443/tcp:1,5683/udp:1\n\
             attack=kind=low_rate start=10 end=60 attackers=dev001,dev002 victim=dev003 intensity=4 period=5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.target_events, None);
        assert_eq!(cfg.attacks.len(), 1);
        assert_eq!(cfg.attacks[0].low_rate_period_s, Some(5.0));
        assert_eq!(cfg.benign_profile.port_preference.len(), 2);
        assert!(generate(&cfg).is_ok());

        let none = ScenarioConfig::parse("attack=none\n").unwrap();
        assert!(none.attacks.is_empty());
        assert!(ScenarioConfig::parse("bogus=1\n").is_err());
    }
}
