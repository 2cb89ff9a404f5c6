use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0}")]
    Pipeline(String),
    #[error("missing artifact {name}: {hint}")]
    MissingArtifact { name: String, hint: String },
    #[error("artifact {0} already exists with different content")]
    Conflict(String),
}

impl ServiceError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn pipeline(e: impl std::fmt::Display) -> Self {
        Self::Pipeline(e.to_string())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::InvalidInput(_) => "invalid_input",
            Self::Pipeline(_) => "pipeline",
            Self::MissingArtifact { .. } => "missing_artifact",
            Self::Conflict(_) => "conflict",
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 3,
            Self::Io { .. } => 4,
            Self::InvalidInput(_) | Self::Pipeline(_) => 5,
            Self::MissingArtifact { .. } => 6,
            Self::Conflict(_) => 7,
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: ErrorBody {
                kind: self.kind().to_string(),
                message: self.to_string(),
                exit_code: self.exit_code(),
            },
        }
    }
}

/// Machine-readable error printed on stderr by the CLI.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
