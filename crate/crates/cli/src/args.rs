use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use flowguard_core::detector::Combine;
use flowguard_core::features::SplitPart;
use flowguard_core::forest::DEFAULT_ALPHA_GRID;
use flowguard_core::{AETrainConfig, AttackKind, DetectorConfig, ForestParams, WindowConfig};

#[derive(Debug, Parser)]
#[command(
    name = "flowguard",
    version,
    about = "Flow-window DDoS detection for IoT device fleets",
    long_about = "Flow-window DDoS detection for IoT device fleets.\n\n\
        Typical pipeline: synth -> extract -> train -> prune -> quantize -> \
        ae-train -> detect -> evaluate.\n\n\
        Exit status: 0 success, 1 usage error, 2 data or contract error."
)]
pub struct Cli {
    /// Random seed. Echoed into every run_meta file [default: 42; `synth`
    /// falls back to the scenario file's seed first]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic flow and telemetry trace
    Synth(SynthArgs),
    /// Turn flow and telemetry CSVs into per-device window feature vectors
    Extract(ExtractArgs),
    /// Train the random-forest attack classifier
    Train(TrainArgs),
    /// Cost-complexity prune a trained forest
    Prune(PruneArgs),
    /// Convert a forest to its fixed-point form
    Quantize(QuantizeArgs),
    /// Train the anomaly autoencoder on benign windows
    AeTrain(AeTrainArgs),
    /// Write per-window reconstruction errors
    AeScore(AeScoreArgs),
    /// Write per-window attack probabilities from a forest
    Predict(PredictArgs),
    /// Run the combined detector and write alerts plus a per-window trace
    Detect(DetectArgs),
    /// Evaluate one or more detector configurations into a report
    Evaluate(EvaluateArgs),
    /// Compare float and fixed-point forest accuracy, latency and size
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Mixed attack scenario
    Default,
    /// No attacks at all
    Benign,
    /// Only the low-rate pulse attack
    LowRate,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario file in key=value form
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario used when no --config is given
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    /// Override the number of devices
    #[arg(long)]
    pub n_devices: Option<usize>,
    /// Override the trace duration in seconds
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Override the total flow budget
    #[arg(long)]
    pub target_events: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Window length in seconds
    #[arg(long, default_value_t = WindowConfig::default().window_s)]
    pub window_s: f64,
    /// Step between window starts in seconds
    #[arg(long, default_value_t = WindowConfig::default().stride_s)]
    pub stride_s: f64,
    /// Trailing windows used for the rate deviation features
    #[arg(long, default_value_t = WindowConfig::default().baseline_windows)]
    pub baseline_windows: usize,
}

impl WindowArgs {
    pub fn config(&self) -> WindowConfig {
        WindowConfig {
            window_s: self.window_s,
            stride_s: self.stride_s,
            baseline_windows: self.baseline_windows,
        }
    }
}

#[derive(Debug, Args)]
pub struct FlowInput {
    /// Flow records CSV
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Device telemetry CSV; windows without samples use neutral defaults
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    /// Column mapping file (key=value) for non-canonical flow CSVs
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Bad rows tolerated per input file before giving up
    #[arg(long, default_value_t = 100)]
    pub max_bad_rows: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub input: FlowInput,
    /// Features CSV to write
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    /// Number of trees
    #[arg(long, default_value_t = ForestParams::default().n_trees)]
    pub n_trees: usize,
    /// Maximum tree depth
    #[arg(long, default_value_t = ForestParams::default().max_depth)]
    pub max_depth: usize,
    /// Minimum training samples per leaf
    #[arg(long, default_value_t = ForestParams::default().min_samples_leaf)]
    pub min_samples_leaf: usize,
    /// Features tried per split [default: ceil(sqrt(feature count))]
    #[arg(long)]
    pub features_per_split: Option<usize>,
    /// Draw a bootstrap sample per tree
    #[arg(long, action = ArgAction::Set, default_value_t = ForestParams::default().bootstrap)]
    pub bootstrap: bool,
    /// Fixed pruning penalty applied right after training (0 keeps full trees)
    #[arg(long, default_value_t = ForestParams::default().prune_alpha)]
    pub prune_alpha: f64,
}

impl ForestArgs {
    pub fn params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            features_per_split: self.features_per_split,
            bootstrap: self.bootstrap,
            prune_alpha: self.prune_alpha,
        }
    }
}

#[derive(Debug, Args)]
pub struct Selection {
    /// Features CSV
    #[arg(long)]
    pub features: PathBuf,
    /// Attack kinds to drop before use (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub exclude_kind: Vec<AttackKind>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub select: Selection,
    /// Chronological split to train on: train, validation, test or all
    #[arg(long, default_value = "train")]
    pub split: SplitPart,
    /// Forest model file to write
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Forest model to prune
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub select: Selection,
    /// Split used to choose the penalty
    #[arg(long, default_value = "validation")]
    pub split: SplitPart,
    /// Candidate penalties (comma separated); ties go to the larger one
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHA_GRID.to_vec())]
    pub alpha_grid: Vec<f64>,
    /// Prune at this penalty instead of searching the grid
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Pruned model file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Float forest model
    #[arg(long)]
    pub model: PathBuf,
    /// Fixed-point model file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AeTrainArgs {
    /// Features CSV; attack-labeled windows are skipped
    #[arg(long)]
    pub features: PathBuf,
    /// Split to train on
    #[arg(long, default_value = "train")]
    pub split: SplitPart,
    /// Autoencoder model file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Passes over the training windows
    #[arg(long, default_value_t = AETrainConfig::default().epochs)]
    pub epochs: usize,
    /// Mini-batch size
    #[arg(long, default_value_t = AETrainConfig::default().batch_size)]
    pub batch_size: usize,
    /// Gradient step size
    #[arg(long, default_value_t = AETrainConfig::default().learning_rate)]
    pub learning_rate: f64,
}

#[derive(Debug, Args)]
pub struct AeScoreArgs {
    /// Autoencoder model
    #[arg(long)]
    pub model: PathBuf,
    /// Features CSV
    #[arg(long)]
    pub features: PathBuf,
    /// Split to score
    #[arg(long, default_value = "all")]
    pub split: SplitPart,
    /// Scores CSV to write (device,window_start,score)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Float or fixed-point forest model
    #[arg(long)]
    pub model: PathBuf,
    /// Features CSV
    #[arg(long)]
    pub features: PathBuf,
    /// Split to score
    #[arg(long, default_value = "all")]
    pub split: SplitPart,
    /// Probability at or above which a window is called an attack
    #[arg(long, default_value_t = DetectorConfig::default().rf_threshold)]
    pub threshold: f64,
    /// Predictions CSV to write (device,window_start,probability,attack)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Forest probability at or above which the supervised path fires
    #[arg(long, default_value_t = DetectorConfig::default().rf_threshold)]
    pub rf_threshold: f64,
    /// Quantile of recent benign-looking scores used as the anomaly threshold
    #[arg(long, default_value_t = DetectorConfig::default().ae_quantile)]
    pub ae_quantile: f64,
    /// Scores kept per device for the anomaly threshold
    #[arg(long, default_value_t = DetectorConfig::default().ae_history)]
    pub ae_history: usize,
    /// Scores a device must buffer before its anomaly path may fire
    #[arg(long, default_value_t = DetectorConfig::default().warmup)]
    pub warmup: usize,
    /// Threshold relief gain under high CPU load
    #[arg(long, default_value_t = DetectorConfig::default().relief_gain)]
    pub relief_gain: f64,
    /// CPU percentage where relief starts
    #[arg(long, default_value_t = DetectorConfig::default().relief_knee)]
    pub relief_knee: f64,
    /// CPU range over which relief reaches its full gain
    #[arg(long, default_value_t = DetectorConfig::default().relief_span)]
    pub relief_span: f64,
}

impl DetectorArgs {
    pub fn config(&self, combine: Combine) -> DetectorConfig {
        DetectorConfig {
            rf_threshold: self.rf_threshold,
            ae_quantile: self.ae_quantile,
            ae_history: self.ae_history,
            warmup: self.warmup,
            relief_gain: self.relief_gain,
            relief_knee: self.relief_knee,
            relief_span: self.relief_span,
            combine,
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Float or fixed-point forest model
    #[arg(long)]
    pub forest: PathBuf,
    /// Autoencoder model
    #[arg(long)]
    pub ae: PathBuf,
    /// Features CSV (alternative to --flows)
    #[arg(long, conflicts_with_all = ["flows", "telemetry", "mapping"])]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub input: FlowInput,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Split to run over: train, validation, test or all
    #[arg(long, default_value = "test")]
    pub split: SplitPart,
    /// Run the detector over the windows before the split first so per-device
    /// thresholds are warm; only the split's windows are reported
    #[arg(long)]
    pub warm_start: bool,
    /// Output directory for alerts.txt and trace.csv
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// How the two paths combine: either, both, rf-only or ae-only
    #[arg(long, default_value_t = DetectorConfig::default().combine)]
    pub combine: Combine,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Float or fixed-point forest model
    #[arg(long)]
    pub forest: PathBuf,
    /// Autoencoder model
    #[arg(long)]
    pub ae: PathBuf,
    /// Labeled features CSV
    #[arg(long)]
    pub features: PathBuf,
    /// Split to evaluate on
    #[arg(long, default_value = "test")]
    pub split: SplitPart,
    /// Run the detector over the windows before the split first so per-device
    /// thresholds are warm; only the split's windows are reported
    #[arg(long)]
    pub warm_start: bool,
    /// Combine rules to compare, one report column each (repeat or comma separate)
    #[arg(long, value_delimiter = ',', default_values_t = [DetectorConfig::default().combine])]
    pub combine: Vec<Combine>,
    /// Fixed-point model whose size goes into the report
    #[arg(long)]
    pub quantized: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Report file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Float forest model
    #[arg(long)]
    pub model: PathBuf,
    /// Fixed-point model [default: quantized in memory, size not reported]
    #[arg(long)]
    pub quantized: Option<PathBuf>,
    /// Labeled features CSV
    #[arg(long)]
    pub features: PathBuf,
    /// Split to benchmark on
    #[arg(long, default_value = "test")]
    pub split: SplitPart,
    /// Probability at or above which a window is called an attack
    #[arg(long, default_value_t = DetectorConfig::default().rf_threshold)]
    pub threshold: f64,
    /// Timed passes over the vectors; the first tenth is warm-up
    #[arg(long, default_value_t = 30)]
    pub repetitions: usize,
    /// Report file to write
    #[arg(long)]
    pub out: PathBuf,
}
