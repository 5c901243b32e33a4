use std::path::PathBuf;

/// A single rejected input row. Ingestion collects these instead of failing
/// on the first bad line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unparsable row at line {line}: {reason}")]
    UnparsableRow { line: u64, reason: String },
    #[error("too many bad rows ({count}), first: {first}")]
    TooManyBadRows { count: usize, first: RowError },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("cannot fit normalization on an empty set")]
    FitOnEmpty,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature schema mismatch: expected {expected} features, got {found}")]
    FeatureSchemaMismatch { expected: usize, found: usize },
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("version mismatch: {what} is {found}, expected {expected}")]
    VersionMismatch {
        what: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite loss at epoch {epoch} (batch {batch})")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("insufficient repetitions after warm-up exclusion")]
    InsufficientRepetitions,
    #[error("benchmark needs at least {needed} vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("report has no results")]
    EmptyReport,
    #[error("malformed report: {0}")]
    MalformedReport(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
