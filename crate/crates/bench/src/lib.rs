//! Fixtures shared by the benchmark targets.

use flowguard_core::autoenc::{ae_train, AEModel};
use flowguard_core::features::{extract, normalize_apply, normalize_fit, SplitPart, TimeSplit};
use flowguard_core::forest::{prune, quantize, train, Dataset, DEFAULT_ALPHA_GRID};
use flowguard_core::synthgen::{generate, ScenarioConfig};
use flowguard_core::{
    AETrainConfig, DeviceTelemetry, FeatureVector, FlowRecord, ForestModel, ForestParams, QuantizedForest,
    WindowConfig,
};

pub struct Trace {
    pub flows: Vec<FlowRecord>,
    pub telemetry: Vec<DeviceTelemetry>,
}

/// The default synthetic scenario.
pub fn trace() -> Trace {
    let t = generate(&ScenarioConfig::default()).expect("default scenario generates");
    Trace {
        flows: t.flows,
        telemetry: t.telemetry,
    }
}

pub struct Models {
    pub test: Vec<FeatureVector>,
    pub forest: ForestModel,
    pub quantized: QuantizedForest,
    pub ae: AEModel,
}

/// Default models trained exactly as the command-line pipeline trains them.
pub fn models() -> Models {
    let t = trace();
    let all = extract(&t.flows, &t.telemetry, &WindowConfig::default()).expect("extraction succeeds");
    let split = TimeSplit::default();
    let train_set = split.select(&all, SplitPart::Train);
    let validation = split.select(&all, SplitPart::Validation);
    let raw = train(
        &Dataset::from_vectors(&train_set).unwrap(),
        &ForestParams::default(),
        42,
    )
    .unwrap();
    let forest = prune(&raw, &Dataset::from_vectors(&validation).unwrap(), &DEFAULT_ALPHA_GRID).unwrap();
    let quantized = quantize(&forest).unwrap();

    let benign: Vec<FeatureVector> = train_set.into_iter().filter(|v| !v.is_attack()).collect();
    let stats = normalize_fit(&benign).unwrap();
    let (ae, _) = ae_train(&normalize_apply(&benign, &stats), &stats, &AETrainConfig::default()).unwrap();

    Models {
        test: split.select(&all, SplitPart::Test),
        forest,
        quantized,
        ae,
    }
}
