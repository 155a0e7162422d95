use thiserror::Error;

/// Errors raised by the mechanism, equilibrium and measurement routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GspError {
    #[error("shape mismatch: {what} (expected {expected}, got {got})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for {len} agents")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("empty bid grid for agent {0}")]
    EmptyGrid(usize),

    #[error("enumeration needs {required} joint profiles, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("ratio undefined: {0}")]
    UndefinedRatio(&'static str),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("agent {agent} bids {bid} above its value {value}")]
    Overbid { agent: usize, bid: f64, value: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = GspError> = std::result::Result<T, E>;
