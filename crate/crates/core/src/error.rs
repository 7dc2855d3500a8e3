use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("incomplete state: {0}")]
    IncompleteState(String),

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::Format(_) | Error::Json(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::InvalidConfig(format!($($arg)*)) };
}
pub(crate) use config_err;
