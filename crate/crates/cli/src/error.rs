//! Process-level error type carrying the exit-code contract.
//!
//! Exit codes: 0 success, 2 validation or data problems, 3 numerical
//! failures. Core errors map onto that split by their kind.

use std::fmt;

use contagion_garch::Error as CoreError;

/// Exit code for validation, configuration and data errors.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit code for numerical failures (non-convergence, degenerate linear
/// algebra, clamp-rate aborts).
pub const EXIT_NUMERICAL: u8 = 3;

/// Error with the process exit code it should terminate with.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_VALIDATION, message: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_NUMERICAL, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: EXIT_VALIDATION, message: format!("io: {e}") }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_error_kinds_map_to_the_documented_exit_codes() {
        let data = contagion_garch::io::read_coordinates(std::path::Path::new(
            "/nonexistent/coordinates.csv",
        ))
        .unwrap_err();
        assert_eq!(CliError::from(data).code, EXIT_VALIDATION);
        assert_eq!(CliError::numerical("x").code, EXIT_NUMERICAL);
        assert_eq!(CliError::validation("x").code, EXIT_VALIDATION);
    }
}
