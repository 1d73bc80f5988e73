use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is singular on a non-limit direction: {0}")]
    Singular(String),

    #[error("covariance left the physical region at t = {t}: min eigenvalue {min_eig:e} (tolerance {tol:e})")]
    Unphysical { t: f64, min_eig: f64, tol: f64 },

    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that originate in the numerical pipeline rather
    /// than in user input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular(_) | Error::Unphysical { .. } | Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
