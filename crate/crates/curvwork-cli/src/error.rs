//! CLI error taxonomy mapped onto process exit codes.

use curvwork::CurvworkError;

/// Failure classes. Exit codes: validation → 1, runtime/numerical → 2,
/// selfcheck → 3.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration (exit 1).
    Validation(String),
    /// I/O or numerical failure during a well-formed run (exit 2).
    Runtime(String),
    /// One or more selfcheck probes failed (exit 3).
    Selfcheck(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Selfcheck(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
            CliError::Selfcheck(n) => write!(f, "selfcheck: {n} probe(s) failed"),
        }
    }
}

impl From<CurvworkError> for CliError {
    fn from(e: CurvworkError) -> Self {
        match e {
            // Inputs that reached the library in a bad shape are still
            // configuration problems from the user's point of view.
            CurvworkError::InvalidInput(_) | CurvworkError::DimensionMismatch { .. } => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}
