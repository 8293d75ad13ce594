use thiserror::Error;

/// Errors surfaced by the library.
///
/// The split matters for callers: `Input`-like variants (bad data, bad
/// configuration, violated preconditions) are the caller's fault and map to
/// CLI exit code 1, while runtime failures (numerical breakdown, chain or
/// solver non-convergence) map to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampling failure: {0}")]
    Sampling(String),

    #[error("chain failure: {0}")]
    Chain(String),

    #[error("solver did not converge: {0}")]
    SolverNonConvergence(String),

    #[error("malformed box: {0}")]
    MalformedBox(String),
}

impl Error {
    /// True when the error is the caller's fault (bad input or config)
    /// rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
                | Error::InvalidConfig(_)
                | Error::MalformedBox(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
