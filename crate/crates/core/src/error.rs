use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied parameter.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A geometric or algebraic singularity (coincident spins, zero distance).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported cluster size {size} (maximum {max})")]
    UnsupportedOrder { size: usize, max: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("cluster {cluster:?} is missing sub-cluster {missing:?}")]
    MissingSubCluster { cluster: Vec<usize>, missing: Vec<usize> },

    /// Carries the best parameters reached before giving up.
    #[error("fit did not converge after {iterations} iterations: {reason} (best {best:?})")]
    FitFailed { iterations: usize, reason: String, best: Vec<f64> },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for failures caused by numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::FitFailed { .. } | Error::IllConditioned(_) | Error::NotHermitian { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
