use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flowguard_core::autoenc::{ae_train, load_ae, save_ae, AEModel};
use flowguard_core::detector::{detect_vectors, write_alerts, write_trace, Combine, Detection};
use flowguard_core::evalkit::{
    benchmark_latency, config_fingerprint, confusion, trace_confusion, write_report, MetricsReport, Report,
};
use flowguard_core::features::{
    extract, normalize_apply, normalize_fit, read_features, write_features, SplitPart, TimeSplit,
};
use flowguard_core::flowdata::{read_flows_with, read_telemetry_with, write_flows, write_telemetry};
use flowguard_core::flowdata::{ColumnMapping, ReadOptions};
use flowguard_core::forest::{
    load_forest, load_quantized, load_scorer, prune, prune_with_alpha, quantize, save_forest, save_quantized,
    train, Dataset,
};
use flowguard_core::synthgen::{generate, write_meta, ScenarioConfig};
use flowguard_core::{AETrainConfig, AttackScorer, DetectorConfig, DeviceTelemetry, FeatureVector, FlowRecord, RowError};

use crate::args::*;
use crate::meta::RunMeta;
use crate::UsageError;

pub const DEFAULT_SEED: u64 = 42;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Settings that came from flags are a usage problem when they fail
/// validation.
fn flag_check(r: flowguard_core::Result<()>) -> Result<()> {
    r.map_err(|e| usage(e.to_string()))
}

fn out_dir_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn resolve(path: &Path) -> PathBuf {
    if let Ok(p) = path.canonicalize() {
        return p;
    }
    let parent = out_dir_of(path).canonicalize().unwrap_or_else(|_| out_dir_of(path));
    match path.file_name() {
        Some(name) => parent.join(name),
        None => parent,
    }
}

/// Refuses to run when an output would land on one of the inputs, then
/// creates the output directories.
fn prepare_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for out in outputs {
        let o = resolve(out);
        if inputs.iter().any(|i| resolve(i) == o) {
            return Err(usage(format!("output {} would overwrite an input", out.display())));
        }
        let dir = out_dir_of(out);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn warn_bad_rows(path: &Path, bad: &[RowError]) {
    if let Some(first) = bad.first() {
        eprintln!(
            "warning: skipped {} bad row(s) in {} (first: {first})",
            bad.len(),
            path.display()
        );
    }
}

fn read_flow_input(input: &FlowInput) -> Result<(Vec<FlowRecord>, Vec<DeviceTelemetry>)> {
    let flows_path = input
        .flows
        .as_deref()
        .ok_or_else(|| usage("--flows is required"))?;
    let mapping = input
        .mapping
        .as_deref()
        .map(ColumnMapping::from_file)
        .transpose()?;
    let opts = ReadOptions {
        max_bad_rows: input.max_bad_rows,
    };
    let flows = read_flows_with(flows_path, mapping.as_ref(), &opts)
        .with_context(|| format!("reading {}", flows_path.display()))?;
    warn_bad_rows(flows_path, &flows.bad_rows);
    let telemetry = match &input.telemetry {
        Some(p) => {
            let t = read_telemetry_with(p, &opts).with_context(|| format!("reading {}", p.display()))?;
            warn_bad_rows(p, &t.bad_rows);
            t.records
        }
        None => Vec::new(),
    };
    Ok((flows.records, telemetry))
}

fn record_flow_input(meta: &mut RunMeta, input: &FlowInput) -> Result<()> {
    let mapping = match &input.mapping {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            config_fingerprint(&text)
        }
        None => "canonical".to_string(),
    };
    meta.set("mapping", mapping)
        .set("telemetry", input.telemetry.is_some())
        .set("max_bad_rows", input.max_bad_rows);
    Ok(())
}

fn select(vectors: &[FeatureVector], split: SplitPart) -> Vec<FeatureVector> {
    TimeSplit::default().select(vectors, split)
}

fn load_selection(sel: &Selection, split: SplitPart) -> Result<Vec<FeatureVector>> {
    let all = read_features(&sel.features).with_context(|| format!("reading {}", sel.features.display()))?;
    Ok(select(&all, split)
        .into_iter()
        .filter(|v| {
            v.label
                .and_then(|l| l.attack_kind())
                .is_none_or(|k| !sel.exclude_kind.contains(&k))
        })
        .collect())
}

/// Runs detection over `split`. With `warm_start` every window before the
/// split's end is processed and the result is cut down to the split.
fn detect_split(
    all: &[FeatureVector],
    split: SplitPart,
    warm_start: bool,
    rf: &dyn AttackScorer,
    ae: &AEModel,
    cfg: &DetectorConfig,
) -> Result<Detection> {
    let part = select(all, split);
    if !warm_start {
        return Ok(detect_vectors(&part, rf, ae, cfg)?);
    }
    let keep: HashSet<(&str, u64)> = part.iter().map(|v| (v.device.as_str(), v.window_start.to_bits())).collect();
    let end = part.iter().map(|v| v.window_start).fold(f64::NEG_INFINITY, f64::max);
    let prefix: Vec<FeatureVector> = all.iter().filter(|v| v.window_start <= end).cloned().collect();
    let mut det = detect_vectors(&prefix, rf, ae, cfg)?;
    det.trace.retain(|r| keep.contains(&(r.device.as_str(), r.window_start.to_bits())));
    det.alerts.retain(|a| keep.contains(&(a.device.as_str(), a.window_start.to_bits())));
    Ok(det)
}

fn kinds_list(sel: &Selection) -> String {
    let names: Vec<&str> = sel.exclude_kind.iter().map(|k| k.as_str()).collect();
    if names.is_empty() {
        "none".into()
    } else {
        names.join(",")
    }
}

fn require_labels(vectors: &[FeatureVector], path: &Path) -> Result<()> {
    if vectors.is_empty() {
        bail!("{}: no windows in the selected split", path.display());
    }
    if vectors.iter().any(|v| v.label.is_none()) {
        bail!("{}: every window needs a label for this command", path.display());
    }
    Ok(())
}

fn file_size(path: &Path) -> Result<u64> {
    Ok(std::fs::metadata(path)
        .with_context(|| format!("reading {}", path.display()))?
        .len())
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(seed, &a),
        Command::Extract(a) => extract_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::Train(a) => train_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::Prune(a) => prune_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::Quantize(a) => quantize_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::AeTrain(a) => ae_train_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::AeScore(a) => ae_score_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::Predict(a) => predict_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::Detect(a) => detect_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::Evaluate(a) => evaluate_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
        Command::Bench(a) => bench_cmd(seed.unwrap_or(DEFAULT_SEED), &a),
    }
}

fn synth(seed_flag: Option<u64>, a: &SynthArgs) -> Result<()> {
    let (mut cfg, source) = match &a.config {
        Some(p) => (
            ScenarioConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            "file",
        ),
        None => match a.preset {
            Preset::Default => (ScenarioConfig::default(), "default"),
            Preset::Benign => (ScenarioConfig::benign(DEFAULT_SEED), "benign"),
            Preset::LowRate => (ScenarioConfig::low_rate_only(DEFAULT_SEED), "low-rate"),
        },
    };
    cfg.seed = seed_flag.unwrap_or(if a.config.is_some() { cfg.seed } else { DEFAULT_SEED });
    if let Some(n) = a.n_devices {
        cfg.n_devices = n;
    }
    if let Some(d) = a.duration_s {
        cfg.duration_s = d;
    }
    if a.target_events.is_some() {
        cfg.target_events = a.target_events;
    }
    flag_check(cfg.validate())?;

    let flows_path = a.out.join("flows.csv");
    let telemetry_path = a.out.join("telemetry.csv");
    let scenario_path = a.out.join("scenario_meta.txt");
    let inputs: Vec<&Path> = a.config.iter().map(PathBuf::as_path).collect();
    prepare_outputs(&inputs, &[&flows_path, &telemetry_path, &scenario_path])?;

    let trace = generate(&cfg)?;
    write_flows(&trace.flows, &flows_path)?;
    write_telemetry(&trace.telemetry, &telemetry_path)?;
    write_meta(&cfg, &trace, &scenario_path)?;

    let mut meta = RunMeta::new("synth", cfg.seed);
    meta.set("source", source)
        .set("scenario", format!("{cfg:?}"))
        .output(&flows_path)
        .output(&telemetry_path)
        .output(&scenario_path);
    meta.write(&a.out)?;
    println!(
        "synth: {} flows ({} attack), {} telemetry samples, seed {} -> {}",
        trace.flows.len(),
        trace.attack_flow_count(),
        trace.telemetry.len(),
        cfg.seed,
        a.out.display()
    );
    Ok(())
}

fn extract_cmd(seed: u64, a: &ExtractArgs) -> Result<()> {
    let wc = a.window.config();
    flag_check(wc.validate())?;
    let inputs: Vec<&Path> = [&a.input.flows, &a.input.telemetry, &a.input.mapping]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect();
    prepare_outputs(&inputs, &[&a.out])?;
    let (flows, telemetry) = read_flow_input(&a.input)?;
    let vectors = extract(&flows, &telemetry, &wc)?;
    write_features(&vectors, &a.out)?;

    let mut meta = RunMeta::new("extract", seed);
    meta.set("window", format!("{wc:?}"));
    record_flow_input(&mut meta, &a.input)?;
    meta.output(&a.out).write(&out_dir_of(&a.out))?;
    let attacks = vectors.iter().filter(|v| v.is_attack()).count();
    println!(
        "extract: {} windows ({attacks} attack) from {} flows, seed {seed} -> {}",
        vectors.len(),
        flows.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(seed: u64, a: &TrainArgs) -> Result<()> {
    let params = a.forest.params();
    flag_check(params.validate())?;
    prepare_outputs(&[&a.select.features], &[&a.out])?;
    let vectors = load_selection(&a.select, a.split)?;
    let data = Dataset::from_vectors(&vectors)?;
    let mut model = train(&data, &params, seed)?;
    if params.prune_alpha > 0.0 {
        model = prune_with_alpha(&model, params.prune_alpha);
    }
    save_forest(&model, &a.out)?;

    let mut meta = RunMeta::new("train", seed);
    meta.set("split", format!("{:?}", a.split))
        .set("exclude_kind", kinds_list(&a.select))
        .set("forest", format!("{params:?}"))
        .set("windows", vectors.len())
        .output(&a.out)
        .write(&out_dir_of(&a.out))?;
    println!(
        "train: {} trees, {} nodes, classes benign={} attack={}, seed {seed} -> {}",
        model.trees.len(),
        model.node_count(),
        model.class_counts[0],
        model.class_counts[1],
        a.out.display()
    );
    if model.is_degenerate() {
        eprintln!("warning: training data held a single class; the model always predicts it");
    }
    Ok(())
}

fn prune_cmd(seed: u64, a: &PruneArgs) -> Result<()> {
    if let Some(alpha) = a.alpha {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(usage("--alpha must be a finite value >= 0"));
        }
    }
    prepare_outputs(&[&a.model, &a.select.features], &[&a.out])?;
    let model = load_forest(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let pruned = match a.alpha {
        Some(alpha) => prune_with_alpha(&model, alpha),
        None => {
            let vectors = load_selection(&a.select, a.split)?;
            let validation = Dataset::from_vectors(&vectors)?;
            prune(&model, &validation, &a.alpha_grid).map_err(|e| match e {
                flowguard_core::Error::InvalidConfig(m) => usage(m),
                other => other.into(),
            })?
        }
    };
    save_forest(&pruned, &a.out)?;

    let grid: Vec<String> = a.alpha_grid.iter().map(f64::to_string).collect();
    let mut meta = RunMeta::new("prune", seed);
    meta.set("split", format!("{:?}", a.split))
        .set("exclude_kind", kinds_list(&a.select))
        .set("alpha_grid", grid.join(","))
        .set("alpha", a.alpha.map_or_else(|| "search".to_string(), |x| x.to_string()))
        .set("chosen_alpha", pruned.params.prune_alpha)
        .set("model_training_seed", model.training_seed)
        .output(&a.out)
        .write(&out_dir_of(&a.out))?;
    println!(
        "prune: alpha {} kept {} of {} nodes -> {}",
        pruned.params.prune_alpha,
        pruned.node_count(),
        model.node_count(),
        a.out.display()
    );
    Ok(())
}

fn quantize_cmd(seed: u64, a: &QuantizeArgs) -> Result<()> {
    prepare_outputs(&[&a.model], &[&a.out])?;
    let model = load_forest(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let q = quantize(&model)?;
    save_quantized(&q, &a.out)?;

    let (before, after) = (file_size(&a.model)?, file_size(&a.out)?);
    let mut meta = RunMeta::new("quantize", seed);
    meta.set("model_training_seed", model.training_seed)
        .set("float_bytes", before)
        .set("quantized_bytes", after)
        .output(&a.out)
        .write(&out_dir_of(&a.out))?;
    println!(
        "quantize: {before} -> {after} bytes ({:.1}% smaller) -> {}",
        100.0 * (1.0 - after as f64 / before as f64),
        a.out.display()
    );
    Ok(())
}

fn ae_train_cmd(seed: u64, a: &AeTrainArgs) -> Result<()> {
    let cfg = AETrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seed,
    };
    flag_check(cfg.validate())?;
    prepare_outputs(&[&a.features], &[&a.out])?;
    let all = read_features(&a.features).with_context(|| format!("reading {}", a.features.display()))?;
    let benign: Vec<FeatureVector> = select(&all, a.split).into_iter().filter(|v| !v.is_attack()).collect();
    let stats = normalize_fit(&benign).context("fitting normalization on benign windows")?;
    let (model, log) = ae_train(&normalize_apply(&benign, &stats), &stats, &cfg)?;
    save_ae(&model, &a.out)?;

    let mut meta = RunMeta::new("ae-train", seed);
    meta.set("split", format!("{:?}", a.split))
        .set("ae", format!("{cfg:?}"))
        .set("windows", benign.len())
        .set("final_loss", log.epoch_loss.last().copied().unwrap_or(f64::NAN))
        .output(&a.out)
        .write(&out_dir_of(&a.out))?;
    println!(
        "ae-train: {} benign windows, loss {:.6} -> {:.6}, seed {seed} -> {}",
        benign.len(),
        log.epoch_loss.first().copied().unwrap_or(f64::NAN),
        log.epoch_loss.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn ae_score_cmd(seed: u64, a: &AeScoreArgs) -> Result<()> {
    prepare_outputs(&[&a.model, &a.features], &[&a.out])?;
    let model = load_ae(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let all = read_features(&a.features).with_context(|| format!("reading {}", a.features.display()))?;
    let vectors = select(&all, a.split);
    let mut out = String::from("device,window_start,score\n");
    for v in &vectors {
        let _ = writeln!(out, "{},{},{}", v.device, v.window_start, model.score_raw(&v.values)?);
    }
    std::fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;

    let mut meta = RunMeta::new("ae-score", seed);
    meta.set("split", format!("{:?}", a.split))
        .set("windows", vectors.len())
        .output(&a.out)
        .write(&out_dir_of(&a.out))?;
    println!("ae-score: {} windows -> {}", vectors.len(), a.out.display());
    Ok(())
}

fn predict_cmd(seed: u64, a: &PredictArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(usage("--threshold must lie in (0, 1)"));
    }
    prepare_outputs(&[&a.model, &a.features], &[&a.out])?;
    let model = load_scorer(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let all = read_features(&a.features).with_context(|| format!("reading {}", a.features.display()))?;
    let vectors = select(&all, a.split);
    let mut out = String::from("device,window_start,probability,attack\n");
    let mut attacks = 0;
    for v in &vectors {
        let p = model.attack_probability(&v.values)?;
        let hit = p >= a.threshold;
        attacks += usize::from(hit);
        let _ = writeln!(out, "{},{},{p},{}", v.device, v.window_start, u8::from(hit));
    }
    std::fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;

    let mut meta = RunMeta::new("predict", seed);
    meta.set("split", format!("{:?}", a.split))
        .set("threshold", a.threshold)
        .set("windows", vectors.len())
        .output(&a.out)
        .write(&out_dir_of(&a.out))?;
    println!("predict: {attacks} of {} windows flagged -> {}", vectors.len(), a.out.display());
    Ok(())
}

fn detect_cmd(seed: u64, a: &DetectArgs) -> Result<()> {
    let cfg = a.detector.config(a.combine);
    flag_check(cfg.validate())?;
    let wc = a.window.config();
    let alerts_path = a.out_dir.join("alerts.txt");
    let trace_path = a.out_dir.join("trace.csv");
    let inputs: Vec<&Path> = [&a.features, &a.input.flows, &a.input.telemetry, &a.input.mapping]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .chain([a.forest.as_path(), a.ae.as_path()])
        .collect();
    prepare_outputs(&inputs, &[&alerts_path, &trace_path])?;

    let rf = load_scorer(&a.forest).with_context(|| format!("loading {}", a.forest.display()))?;
    let ae = load_ae(&a.ae).with_context(|| format!("loading {}", a.ae.display()))?;
    let mut meta = RunMeta::new("detect", seed);
    let all = match (&a.features, &a.input.flows) {
        (Some(p), _) => {
            meta.set("input", "features");
            read_features(p).with_context(|| format!("reading {}", p.display()))?
        }
        (None, Some(_)) => {
            flag_check(wc.validate())?;
            meta.set("input", "flows").set("window", format!("{wc:?}"));
            record_flow_input(&mut meta, &a.input)?;
            let (flows, telemetry) = read_flow_input(&a.input)?;
            extract(&flows, &telemetry, &wc)?
        }
        (None, None) => return Err(usage("one of --features or --flows is required")),
    };
    let det = detect_split(&all, a.split, a.warm_start, rf.as_ref(), &ae, &cfg)?;
    write_alerts(&det.alerts, &alerts_path)?;
    write_trace(&det.trace, &trace_path)?;

    meta.set("split", format!("{:?}", a.split))
        .set("warm_start", a.warm_start)
        .set("detector", format!("{cfg:?}"))
        .set("windows", det.trace.len())
        .set("alerts", det.alerts.len())
        .output(&alerts_path)
        .output(&trace_path)
        .write(&a.out_dir)?;
    let devices = det.state.devices.len();
    println!(
        "detect: {} windows over {devices} devices, {} alerts -> {}",
        det.trace.len(),
        det.alerts.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn evaluate_cmd(seed: u64, a: &EvaluateArgs) -> Result<()> {
    let mut seen: Vec<Combine> = Vec::new();
    for c in &a.combine {
        if seen.contains(c) {
            return Err(usage(format!("--combine {c} given twice")));
        }
        seen.push(*c);
        flag_check(a.detector.config(*c).validate())?;
    }
    let mut inputs = vec![a.forest.as_path(), a.ae.as_path(), a.features.as_path()];
    inputs.extend(a.quantized.as_deref());
    prepare_outputs(&inputs, &[&a.out])?;

    let rf = load_scorer(&a.forest).with_context(|| format!("loading {}", a.forest.display()))?;
    let ae = load_ae(&a.ae).with_context(|| format!("loading {}", a.ae.display()))?;
    let all = read_features(&a.features).with_context(|| format!("reading {}", a.features.display()))?;
    let vectors = select(&all, a.split);
    require_labels(&vectors, &a.features)?;
    let model_size = file_size(&a.forest)?;
    let quantized_size = a.quantized.as_deref().map(file_size).transpose()?;

    let mut report = Report::default();
    report.meta.insert("split".into(), format!("{:?}", a.split).to_lowercase());
    report.meta.insert("windows".into(), vectors.len().to_string());
    report.meta.insert(
        "attack_windows".into(),
        vectors.iter().filter(|v| v.is_attack()).count().to_string(),
    );
    report.meta.insert("seed".into(), seed.to_string());
    report.meta.insert("warm_start".into(), a.warm_start.to_string());
    let mut meta = RunMeta::new("evaluate", seed);
    meta.set("split", format!("{:?}", a.split)).set("warm_start", a.warm_start);
    for &c in &a.combine {
        let cfg = a.detector.config(c);
        let det = detect_split(&all, a.split, a.warm_start, rf.as_ref(), &ae, &cfg)?;
        let cm = trace_confusion(&det.trace, |r| r.alert);
        let mut col = MetricsReport::from_counts(cm, config_fingerprint(&format!("{cfg:?}")))?;
        col.model_size_bytes = Some(model_size);
        col.quantized_size_bytes = quantized_size;
        println!(
            "evaluate [{c}]: accuracy {:.4}, recall {}, fpr {}",
            col.metrics.accuracy,
            col.metrics.recall.map_or_else(|| "absent".into(), |r| format!("{r:.4}")),
            col.metrics.fpr.map_or_else(|| "absent".into(), |r| format!("{r:.4}")),
        );
        meta.set(&format!("detector.{c}"), format!("{cfg:?}"));
        report.columns.push((c.as_str().to_string(), col));
    }
    write_report(&report, &a.out)?;
    meta.output(&a.out).write(&out_dir_of(&a.out))?;
    println!("evaluate: report -> {}", a.out.display());
    Ok(())
}

fn bench_cmd(seed: u64, a: &BenchArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(usage("--threshold must lie in (0, 1)"));
    }
    if a.repetitions < 2 {
        return Err(usage("--repetitions must be >= 2 so timed passes remain after warm-up"));
    }
    let mut inputs = vec![a.model.as_path(), a.features.as_path()];
    inputs.extend(a.quantized.as_deref());
    prepare_outputs(&inputs, &[&a.out])?;

    let forest = load_forest(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let quantized = match &a.quantized {
        Some(p) => load_quantized(p).with_context(|| format!("loading {}", p.display()))?,
        None => quantize(&forest)?,
    };
    let all = read_features(&a.features).with_context(|| format!("reading {}", a.features.display()))?;
    let vectors = select(&all, a.split);
    require_labels(&vectors, &a.features)?;
    let rows: Vec<[f64; flowguard_core::N_FEATURES]> = vectors.iter().map(|v| v.values).collect();
    let truth: Vec<bool> = vectors.iter().map(FeatureVector::is_attack).collect();
    let model_size = file_size(&a.model)?;
    let quantized_size = a.quantized.as_deref().map(file_size).transpose()?;

    let mut report = Report::default();
    report.meta.insert("split".into(), format!("{:?}", a.split).to_lowercase());
    report.meta.insert("windows".into(), vectors.len().to_string());
    report.meta.insert("repetitions".into(), a.repetitions.to_string());
    report.meta.insert("seed".into(), seed.to_string());
    let scorers: [(&str, &dyn AttackScorer); 2] = [("float", &forest), ("quantized", &quantized)];
    for (name, scorer) in scorers {
        let predicted = rows
            .iter()
            .map(|r| Ok(scorer.attack_probability(r)? >= a.threshold))
            .collect::<flowguard_core::Result<Vec<bool>>>()?;
        let cm = confusion(&predicted, &truth)?;
        let latency = benchmark_latency(scorer, &rows, a.repetitions)?;
        let mut col = MetricsReport::from_counts(cm, config_fingerprint(&format!("{name} threshold={}", a.threshold)))?;
        col.latency_p50_us = Some(latency.p50_us);
        col.latency_p99_us = Some(latency.p99_us);
        col.model_size_bytes = Some(model_size);
        col.quantized_size_bytes = quantized_size;
        println!(
            "bench [{name}]: accuracy {:.4}, p50 {:.3} us, p99 {:.3} us over {} samples",
            col.metrics.accuracy, latency.p50_us, latency.p99_us, latency.samples
        );
        report.columns.push((name.to_string(), col));
    }
    write_report(&report, &a.out)?;

    let mut meta = RunMeta::new("bench", seed);
    meta.set("split", format!("{:?}", a.split))
        .set("threshold", a.threshold)
        .set("repetitions", a.repetitions)
        .output(&a.out)
        .write(&out_dir_of(&a.out))?;
    println!("bench: report -> {}", a.out.display());
    Ok(())
}
