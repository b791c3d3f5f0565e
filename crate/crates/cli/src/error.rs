use std::path::PathBuf;

use boundary_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("{0} check(s) failed")]
    Failures(usize),

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Write { .. } => 2,
            CliError::Infeasible(_) => 3,
            CliError::Failures(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::ProbabilityOutOfRange { .. }
            | CoreError::InvalidArgument { .. }
            | CoreError::Parse { .. } => CliError::Config(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
