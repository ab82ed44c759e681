use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown reward structure preset `{0}` (expected `symmetric` or `asymmetric`)")]
    UnknownPreset(String),

    #[error("unknown decoding preset `{0}`")]
    UnknownDecoding(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("authentication failed: {0}")]
    Authentication(String),

    #[error("transport failed after {attempts} attempt(s): {message}")]
    TransportExhausted { attempts: u32, message: String },

    #[error("request budget of {0} exhausted")]
    BudgetExhausted(usize),

    #[error("fit quality: {0}")]
    FitQuality(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("missing input: {0}")]
    MissingInput(PathBuf),

    #[error("refusing to overwrite {0}")]
    AlreadyExists(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 1 validation, 2 runtime/provider, 3 fit quality.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownPreset(_)
            | Error::UnknownDecoding(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch(_)
            | Error::Parse { .. }
            | Error::MissingInput(_)
            | Error::AlreadyExists(_)
            | Error::Config(_) => 1,
            Error::FitQuality(_) => 3,
            _ => 2,
        }
    }
}
