//! Shared error type for the whole library.

use thiserror::Error;

/// Errors produced by measure construction, solvers, and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation was asked to run on a measure representation that cannot
    /// support it (e.g. entropy on a particle ensemble).
    #[error("unsupported representation: {0}")]
    UnsupportedRepresentation(String),

    /// A gradient-field query fell outside the grid domain.
    #[error("query point {point} outside grid domain [{lo}, {hi}]")]
    Extrapolation { point: f64, lo: f64, hi: f64 },

    /// A time step exceeds the stability (CFL) bound; the step is refused.
    #[error("time step {dt} violates stability bound {bound} ({context})")]
    CflViolation { dt: f64, bound: f64, context: String },

    /// A simulation produced a non-finite coordinate.
    #[error("divergence at t={time}: {what}")]
    Divergence { time: f64, what: String },

    /// A fixed-point or Newton iteration failed to reach tolerance.
    #[error("iteration limit {limit} reached ({context}); last residual {residual}")]
    IterationLimit { limit: usize, residual: f64, context: String },

    /// A least-squares fit is degenerate (e.g. all probe points identical).
    #[error("singular fit: {0}")]
    SingularFit(String),

    /// A rate fit was requested on a series with nonpositive values.
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    /// A Newton solve found an indefinite Hessian where convexity was promised.
    #[error("convexity violation: {0}")]
    Convexity(String),

    /// Scenario configuration failed validation; names the offending key.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// Wrapped I/O failure with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Parse failure for CSV/JSON/TOML payloads.
    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::InvalidArgument`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Shorthand for [`Error::Io`].
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
