use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node cap exceeded: grid would need {requested} nodes (cap {cap})")]
    Capacity { requested: u128, cap: u128 },

    #[error("non-finite integrand value {value} at node {node:?}")]
    NonFinite { node: Vec<f64>, value: String },

    #[error("region escapes the quadrature box: need R >= {required_radius} (grid has R = {grid_radius})")]
    Truncation {
        required_radius: f64,
        grid_radius: f64,
    },

    #[error("exponent p = {0} is not supported by this operation")]
    UnsupportedExponent(f64),

    #[error("outside the domain: {0}")]
    Domain(String),

    #[error("degenerate test function: {0}")]
    DegenerateTest(String),

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("power iteration did not converge after {iterations} iterations (estimate {estimate}, last relative gap {gap:e})")]
    NonConvergence {
        estimate: f64,
        gap: f64,
        iterations: usize,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
