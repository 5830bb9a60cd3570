use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rotation is not proper orthonormal (residual {residual:.3e})")]
    InvalidRotation { residual: f64 },
    #[error("embedded rotation rows are parallel or near zero")]
    DegenerateRotation,
    #[error("direction vector has zero length")]
    ZeroDirection,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("external force {magnitude:.3} N exceeds limit {limit:.3} N")]
    ForceLimitExceeded { magnitude: f64, limit: f64 },
    #[error("step {index}: {source}")]
    AtStep {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("stiffness must be positive, got {0}")]
    DegenerateStiffness(f64),
    #[error("pose and wrench tracks do not overlap in time")]
    EmptyOverlap,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    /// The innermost error, skipping step-index wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
