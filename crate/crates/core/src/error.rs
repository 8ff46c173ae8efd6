use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("innovation covariance is not positive definite at step {step}")]
    SingularInnovation { step: usize },

    #[error("{what} is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { what: String, min_eigenvalue: f64 },

    #[error("panel contains no observations")]
    NoObservations,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coverage gap: {0}")]
    Coverage(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("singular regressor matrix: {0}")]
    SingularRegressors(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rejection sampling exhausted after {attempts} attempts")]
    RejectionCap { attempts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
