use thiserror::Error;

/// Errors raised by the separation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{routine} did not converge after {iterations} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { routine: &'static str, iterations: usize, residual: f64 },

    /// Mixing update requested with an all-zero source estimate.
    #[error("degenerate update: all source rows are zero")]
    DegenerateUpdate,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
