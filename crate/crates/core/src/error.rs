use thiserror::Error;

use crate::pde::PdeState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of a function.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("computational domain too small: boundary mass {boundary_mass:.3e} exceeds {limit:.1e}")]
    DomainTooSmall { boundary_mass: f64, limit: f64 },

    #[error("density became negative ({min:.3e}) at t = {t}")]
    Negativity { t: f64, min: f64 },

    /// Non-finite values appeared. Carries the last finite PDE state when one exists.
    #[error("blow-up suspected at t = {t}: {detail}")]
    BlowUp {
        t: f64,
        detail: String,
        last_state: Option<Box<PdeState>>,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }
}
