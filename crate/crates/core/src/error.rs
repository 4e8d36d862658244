use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("refinement did not converge: {0}")]
    NonConvergence(String),
    #[error("divergent integral: {0}")]
    Divergence(String),
    #[error("indeterminate: {what} (partial sum {lower:e}, with tail estimate {upper:e})")]
    Indeterminate { what: String, lower: f64, upper: f64 },
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("ill-conditioned: {0}")]
    Conditioning(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

impl Error {
    pub fn is_indeterminate(&self) -> bool {
        matches!(self, Error::Indeterminate { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
