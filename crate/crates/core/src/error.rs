use thiserror::Error;

/// Errors raised by the sphericity library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SphericityError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("accuracy target missed ({detail}): residual {residual:.3e}")]
    Accuracy { residual: f64, detail: String },

    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T> = std::result::Result<T, SphericityError>;

pub(crate) fn domain(msg: impl Into<String>) -> SphericityError {
    SphericityError::Domain(msg.into())
}
