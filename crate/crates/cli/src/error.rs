use std::fmt;

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ebmss::Error> for CliError {
    fn from(e: ebmss::Error) -> Self {
        use ebmss::Error::*;
        let code = match e {
            Dimension(_) | InvalidParameter(_) | Coverage(_) | Data(_) | NoObservations => EXIT_INPUT,
            SingularInnovation { .. }
            | NotPsd { .. }
            | SingularRegressors(_)
            | Numerical(_)
            | RejectionCap { .. } => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::input(format!("json: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
