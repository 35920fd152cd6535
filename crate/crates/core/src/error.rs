use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("non-finite value while evaluating {0}")]
    NonFinite(&'static str),

    #[error("optimal variance root solve did not converge for u = {u} after {iterations} iterations")]
    RootNotConverged { u: f64, iterations: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("penalty block is singular at component {index} (S22 = {value:e})")]
    SingularPenalty { index: usize, value: f64 },

    #[error("Krylov breakdown after {iterations} iterations")]
    KrylovBreakdown { iterations: usize },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("path step rejected at t = {t} after {halvings} halvings")]
    PathAborted { t: f64, halvings: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidHyper(_)
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::Unsupported(_)
                | Error::Config(_)
                | Error::Format(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
