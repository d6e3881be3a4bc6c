use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Each variant maps to one failure family so the
/// CLI can pick an exit code without string matching.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero total energy")]
    ZeroTotalEnergy,

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("profile does not have unit l1 sum (sum = {sum})")]
    NotUnitSum { sum: f64 },

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("row {row}: {reason}")]
    RowShape { row: usize, reason: String },

    #[error("price curve: {0}")]
    PriceCurve(String),

    #[error("empty prototype list")]
    EmptyPrototypes,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("k = {k} exceeds the number of profiles ({n})")]
    TooManyClusters { k: usize, n: usize },

    #[error("invalid clustering configuration: {0}")]
    InvalidConfig(String),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("unknown cluster index {0}")]
    UnknownCluster(usize),

    #[error("invalid profile index {0}")]
    InvalidProfileIndex(usize),

    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),

    #[error("profile {0} has no finite disguise effort")]
    NotStrategic(String),

    #[error("theta must be non-negative, got {0}")]
    NegativeTheta(f64),

    #[error("invalid theta grid: {0}")]
    InvalidGrid(String),

    #[error("missing {0}")]
    MissingInput(String),

    #[error("checksum mismatch for {file}: manifest has {expected}, file has {actual}")]
    ChecksumMismatch {
        file: String,
        expected: String,
        actual: String,
    },

    #[error("incompatible intermediate file {file}: {reason}")]
    Incompatible { file: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// The pipeline stage that raised this error, if known.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// True for failures caused by bad or missing inputs rather than by a
    /// computation going wrong.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::MalformedHeader { .. }
            | Error::RowShape { .. }
            | Error::PriceCurve(_)
            | Error::MissingInput(_)
            | Error::ChecksumMismatch { .. }
            | Error::Incompatible { .. }
            | Error::Io { .. }
            | Error::Csv { .. }
            | Error::Config(_)
            | Error::InvalidGrid(_)
            | Error::EmptyPrototypes => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
