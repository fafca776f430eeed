use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: duplicate observation of agent {agent} at frame {frame}")]
    DuplicateObservation {
        path: PathBuf,
        line: usize,
        agent: i64,
        frame: i64,
    },
    #[error("{0}: scene contains no observations")]
    EmptyScene(PathBuf),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty sequence: {0}")]
    EmptySequence(String),
    #[error("empty input set")]
    EmptySet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    DivergenceDetected {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("agent {agent} lacks history at frame {frame}: {detail}")]
    InsufficientHistory {
        agent: i64,
        frame: i64,
        detail: String,
    },
    #[error("model bundle dimension mismatch: {0}")]
    ModelDimensionMismatch(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
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
