//! Flow-window DDoS detection for IoT device fleets.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`flowdata`] ingests flow records and device telemetry (or
//!    [`synthgen`] produces them),
//! 2. [`features`] turns them into per-device, per-window feature vectors,
//! 3. [`forest`] (supervised) and [`autoenc`] (benign-only) score each
//!    window,
//! 4. [`detector`] combines both scores under adaptive thresholds and emits
//!    alerts; [`evalkit`] measures the result.

pub mod autoenc;
pub mod container;
pub mod detector;
pub mod error;
pub mod evalkit;
pub mod features;
pub mod flowdata;
pub mod forest;
pub mod kv;
pub mod synthgen;

pub use error::{Error, Result, RowError};
pub use features::{FeatureVector, NormStats, WindowConfig, N_FEATURES};
pub use flowdata::{AttackKind, DeviceTelemetry, FlowRecord, Protocol, TrafficLabel};
pub use forest::{AttackScorer, ForestModel, ForestParams, QuantizedForest};
pub use autoenc::{AEModel, AETrainConfig};
pub use detector::{Alert, DetectorConfig};
pub use evalkit::{ConfusionMatrix, Metrics};
