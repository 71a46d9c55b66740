use crate::groups::SummabilityCertificate;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// Greedy extraction ran past its search horizon. The indices chosen so
    /// far are returned so callers can inspect how far it got.
    #[error("not certifiable within horizon {horizon}: found {} of {wanted} indices", partial.indices.len())]
    NotCertifiable { horizon: usize, wanted: usize, partial: SummabilityCertificate },

    #[error("step {step} rejected: {reason} (min Choi eigenvalue {min_choi_eigenvalue:.3e})")]
    RejectedStep { step: usize, min_choi_eigenvalue: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
