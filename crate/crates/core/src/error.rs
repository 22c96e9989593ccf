use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum LulcError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("window or pixel out of bounds: {0}")]
    Bounds(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("band not found: {0}")]
    BandNotFound(String),
    #[error("band name already present: {0}")]
    NameCollision(String),
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("conflicting labels: {0}")]
    Conflict(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training labels contain a single class ({0})")]
    DegenerateLabels(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },
}

impl LulcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LulcError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, LulcError::Config(_))
    }
}

pub type Result<T, E = LulcError> = std::result::Result<T, E>;
