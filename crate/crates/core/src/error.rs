use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("simulation unstable: {0}")]
    Instability(String),
    #[error("checkpoint format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("{path}: parse error at line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
