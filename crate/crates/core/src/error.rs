use thiserror::Error;

/// Errors produced by the numerical routines and the file layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("input is not normalized (norm {norm}, expected 1)")]
    NotNormalized { norm: f64 },

    #[error("factorization does not match the distribution (residual {residual:e})")]
    FactorizationMismatch { residual: f64 },

    #[error("{path}: {context}: {msg}")]
    Parse {
        path: String,
        context: String,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
