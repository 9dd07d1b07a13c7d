use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IslError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("training diverged at epoch {epoch} (K = {k}, |theta| = {theta_norm:.4e}): {reason}")]
    Diverged {
        epoch: usize,
        k: usize,
        theta_norm: f64,
        reason: String,
    },

    #[error("ingestion failed: {0}")]
    Ingestion(String),

    #[error("io: {0}")]
    Io(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<std::io::Error> for IslError {
    fn from(e: std::io::Error) -> Self {
        IslError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for IslError {
    fn from(e: serde_json::Error) -> Self {
        IslError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, IslError>;
