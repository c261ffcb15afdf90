use thiserror::Error;

/// Errors raised across the simulation, diagnostics and calibration stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("norm drift {drift:e} exceeds tolerance {tolerance:e} after {steps} steps")]
    NormDrift { drift: f64, tolerance: f64, steps: usize },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("undefined support: p > 0 where q = 0 at index {index}")]
    UndefinedSupport { index: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for the command-line tool: 2 for configuration
    /// and input problems, 3 for numerical failures, 4 for budget overruns.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NormDrift { .. }
            | Error::NonConvergence(_)
            | Error::Singular(_)
            | Error::Degenerate(_)
            | Error::UndefinedSupport { .. } => 3,
            Error::BudgetExceeded(_) => 4,
            Error::InvalidArgument(_) | Error::BasisMismatch(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
