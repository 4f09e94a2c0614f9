use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient history: need {needed} values, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate observation for {channel} activated {date}, retention day {retention_day}")]
    DuplicateObservation {
        channel: String,
        date: String,
        retention_day: usize,
    },

    #[error("retention gap for {channel} activated {date}: day {missing} missing")]
    RetentionGap {
        channel: String,
        date: String,
        missing: usize,
    },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("no curve for {channel} activated {date}")]
    MissingCurve { channel: String, date: String },

    #[error("moving-average scale {scale} exceeds series length {len}")]
    ScaleTooLarge { scale: usize, len: usize },

    #[error("invalid clip bounds: {lo} > {hi}")]
    InvalidBounds { lo: i64, hi: i64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown backbone `{0}` (expected linear, dlinear or mixer)")]
    UnknownBackbone(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },

    #[error("every entry has a near-zero actual value")]
    AllEntriesDegenerate,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate actual cumulative LTV ({0})")]
    DegenerateActual(f64),

    #[error("corrupt model artifact: {0}")]
    CorruptArtifact(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InsufficientHistory { .. } => "InsufficientHistory",
            Error::OutOfRange(_) => "OutOfRange",
            Error::Parse { .. } => "ParseError",
            Error::DuplicateObservation { .. } => "DuplicateObservation",
            Error::RetentionGap { .. } => "RetentionGap",
            Error::InvalidValue(_) => "InvalidValue",
            Error::MissingCurve { .. } => "MissingCurve",
            Error::ScaleTooLarge { .. } => "ScaleTooLarge",
            Error::InvalidBounds { .. } => "InvalidBounds",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::UnknownBackbone(_) => "UnknownBackbone",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyDataset(_) => "EmptyDataset",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
            Error::AllEntriesDegenerate => "AllEntriesDegenerate",
            Error::EmptyInput(_) => "EmptyInput",
            Error::DegenerateActual(_) => "DegenerateActual",
            Error::CorruptArtifact(_) => "CorruptArtifact",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
        }
    }
}
