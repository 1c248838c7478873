use thiserror::Error;

/// Errors raised by learners, generators and the importance pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("labels must contain both classes 0 and 1")]
    DegenerateLabels,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid learner specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("dataset carries no oracle functions")]
    MissingOracle,

    #[error("linear diagnostics need linear models with exposed coefficients")]
    DiagnosticsUnavailable,

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
