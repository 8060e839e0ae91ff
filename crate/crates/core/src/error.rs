use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: invalid parameters, mismatched dimensions or lengths.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input violated an operation's precondition (e.g. an asymmetric covariance).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    /// The baseline error integral was zero, so the RPI ratio is undefined.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Json(_) => 2,
            Error::Numerical { .. }
            | Error::UndefinedMetric(_)
            | Error::InsufficientData { .. } => 3,
            Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
