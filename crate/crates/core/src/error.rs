use thiserror::Error;

/// Faults raised by the numerical core. Hypothesis failures are not faults;
/// they are reported as rows of a [`crate::Report`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("fiber map left [0,1]: G({x}, {y}) = {value}")]
    FiberRange { x: f64, y: f64, value: f64 },
    #[error("LP support of {size} points exceeds the cap of {cap}")]
    LpCap { size: usize, cap: usize },
    #[error("LP solver failure: {0}")]
    Solver(String),
    #[error("invalid parameter `{name}`: {reason}")]
    Param { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Param {
        name,
        reason: reason.into(),
    }
}
