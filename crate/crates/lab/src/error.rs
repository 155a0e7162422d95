use gsp_core::GspError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Schema(_) => 2,
            Self::Budget(_) => 3,
            Self::Invariant(_) => 4,
            Self::Io(_) => 1,
        }
    }
}

impl From<GspError> for LabError {
    fn from(e: GspError) -> Self {
        match e {
            GspError::BudgetExceeded { .. } => Self::Budget(e.to_string()),
            GspError::Invariant(_) => Self::Invariant(e.to_string()),
            _ => Self::Schema(e.to_string()),
        }
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}
