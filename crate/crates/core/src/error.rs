use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid arm set: {0}")]
    InvalidArmSet(String),

    #[error("invalid round clock: {0}")]
    InvalidClock(String),

    #[error("arm index {arm} out of range for {k} arms")]
    InvalidArm { arm: usize, k: usize },

    #[error("policy queried before every arm was pulled once ({pulled} of {k} initialised)")]
    NotInitialized { pulled: usize, k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pre-drawn feedback for arm {arm} exhausted after {len} draws")]
    FeedbackExhausted { arm: usize, len: usize },

    #[error("no instance satisfied the gap constraint after {attempts} draws (k = {k}, min_gap = {min_gap})")]
    GeneratorExhausted { attempts: usize, k: usize, min_gap: f64 },

    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },

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
}

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
