use thiserror::Error;

/// Error type shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Rejection sampling gave up before finding an admissible draw.
    #[error("sampling exhausted after {attempts} attempts: {context}")]
    SamplingExhausted { attempts: u32, context: String },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// An operation was called in the wrong order (e.g. backward before forward).
    #[error("state error: {0}")]
    StateError(String),

    /// A correlation metric is undefined for the given inputs.
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable category slug used in CLI error output.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::SamplingExhausted { .. } => "sampling-exhausted",
            Error::NumericFailure(_) => "numeric-failure",
            Error::StateError(_) => "state-error",
            Error::DegenerateMetric(_) => "degenerate-metric",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
