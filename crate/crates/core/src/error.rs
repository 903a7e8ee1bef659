use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin sector: {0}")]
    InvalidSector(String),

    #[error("incompatible sectors: {0}")]
    IncompatibleSector(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("{what} did not converge after {iterations} iterations (best residual {best:.3e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        best: f64,
    },

    #[error("degenerate {what}: gap {gap:.3e}")]
    Degeneracy { what: &'static str, gap: f64 },

    #[error("ill-conditioned target density: site {site} has occupation {value:.3e} (floor {floor:.1e})")]
    IllConditionedTarget { site: usize, value: f64, floor: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("config error: {key}: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of an iterative numerical method rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. } | Error::Degeneracy { .. } | Error::Numeric(_)
        )
    }
}
