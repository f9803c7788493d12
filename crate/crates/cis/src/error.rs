use std::path::Path;

use cis_core::CisError;

/// Everything a command can fail with. [`CliError::exit_code`] maps each
/// kind to the process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] CisError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_DEGENERACY: u8 = 3;
pub const EXIT_NON_CONVERGENCE: u8 = 4;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Core(CisError::Validation(_)) => EXIT_VALIDATION,
            CliError::Core(CisError::Degeneracy { .. }) => EXIT_DEGENERACY,
            CliError::Core(CisError::NonConvergence { .. }) => EXIT_NON_CONVERGENCE,
            _ => EXIT_FAILURE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(CisError::Validation("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(CisError::Degeneracy { ess: 1.0, context: "x".into() }).exit_code(), 3);
        assert_eq!(CliError::Core(CisError::NonConvergence { stages: 3, beta: 0.5 }).exit_code(), 4);
        assert_eq!(CliError::ChecksFailed(2).exit_code(), 1);
    }
}
