use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {0}")]
    ModelInvalid(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("step size {h} too large: {reason}")]
    StepSize { h: f64, reason: String },

    #[error("spectral gap {gap:.3e} below floor {floor:.3e} at X = {at:?}")]
    GapViolation { gap: f64, floor: f64, at: Vec<f64> },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:.3e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("quadrature resolution insufficient: {0}")]
    QuadratureResolution(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                got,
            })
        }
    }
}
