use thiserror::Error;

/// Exit codes: 0 success, 2 bad input, 3 violated assumption, 4 internal.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Assumption(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Assumption(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<acp_core::Error> for CliError {
    fn from(e: acp_core::Error) -> Self {
        match e.root() {
            acp_core::Error::AssumptionViolated(_) | acp_core::Error::ForceLimitExceeded { .. } => {
                CliError::Assumption(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
