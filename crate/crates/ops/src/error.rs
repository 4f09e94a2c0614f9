use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

pub type Result<T, E = OpsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OpsError {
    #[error(transparent)]
    Core(#[from] ttf_core::Error),

    #[error("unknown version `{0}`")]
    UnknownVersion(String),

    #[error("model `{0}` is not approved")]
    NotApproved(String),

    #[error("drift monitor has no baseline; approve a model first")]
    NoBaseline,

    #[error("hub is locked: {0}")]
    Locked(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl OpsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OpsError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            OpsError::Core(e) => e.kind(),
            OpsError::UnknownVersion(_) => "UnknownVersion",
            OpsError::NotApproved(_) => "NotApproved",
            OpsError::NoBaseline => "NoBaseline",
            OpsError::Locked(_) => "Locked",
            OpsError::Config(_) => "InvalidConfig",
            OpsError::Usage(_) => "Usage",
            OpsError::Io { .. } => "Io",
            OpsError::Json(_) => "Json",
        }
    }

    /// The single-line JSON record printed on failure.
    pub fn record(&self) -> serde_json::Value {
        json!({ "error": self.kind(), "message": self.to_string() })
    }
}
