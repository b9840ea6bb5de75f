//! Command failures and their process exit codes.

use std::fmt;

use watchdog_core::Error;

/// Exit code of a successful run, or of an accepted `guard` input.
pub const EXIT_OK: u8 = 0;
/// `guard` rejected its input.
pub const EXIT_REJECT: u8 = 1;
/// Bad arguments, configuration, or input files.
pub const EXIT_USAGE: u8 = 2;
/// Training diverged or a computation produced NaN/∞.
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERIC, message: message.into() }
    }

    /// Prefixes the message with what was being done.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self { message: format!("{what}: {}", self.message), ..self }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) | Error::NonFiniteGradient { .. } | Error::Diverged { .. } => {
                Self::numeric(e.to_string())
            }
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

/// Attaches context to core results.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| e.into().context(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_errors_map_to_exit_3_and_the_rest_to_2() {
        assert_eq!(Failure::from(Error::Diverged { epoch: 0, batch: 1, loss: f64::NAN }).code, EXIT_NUMERIC);
        assert_eq!(Failure::from(Error::NonFinite("x".into())).code, EXIT_NUMERIC);
        assert_eq!(Failure::from(Error::Empty("x")).code, EXIT_USAGE);
        assert_eq!(Failure::from(Error::Magic { expected: 1, found: 2 }).code, EXIT_USAGE);
    }
}
