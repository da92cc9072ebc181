use thiserror::Error;

/// Errors raised by the geosteering engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("position outside model extent: x = {x} not in [{min}, {max}]")]
    Domain { x: f64, min: f64, max: f64 },

    #[error("ensemble generation failed: {0}")]
    Generation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A trajectory or decision violates a drilling constraint. The first
    /// field names the constraint (`dogleg`, `inclination`, `grid`).
    #[error("{constraint} constraint violated: {detail}")]
    Constraint {
        constraint: &'static str,
        detail: String,
    },

    #[error("invalid session state: {0}")]
    State(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
