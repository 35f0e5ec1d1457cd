use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at `{key}`: {message}")]
    Parse { key: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("position ({x}, {y}) is outside the interpolable grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("position ({x}, {y}) touches a no-data cell")]
    NoData { x: f64, y: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn value(msg: impl Into<String>) -> Self {
        Error::Value(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors that mean a query left the usable part of the map.
    pub fn is_bounds(&self) -> bool {
        matches!(self, Error::OutOfBounds { .. } | Error::NoData { .. })
    }
}
