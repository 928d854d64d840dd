use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("factorization lost positivity at pivot {pivot} (value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("closed loop is unstable (spectral radius estimate {rho:.6})")]
    Unstable { rho: f64 },

    #[error("state diverged at step {step}: |x| = {norm:e} exceeds {limit:e}")]
    Diverged { step: usize, norm: f64, limit: f64 },

    #[error("least-squares problem is not identifiable: smallest normal eigenvalue {sigma_min:e} < {threshold:e}")]
    Identifiability { sigma_min: f64, threshold: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
