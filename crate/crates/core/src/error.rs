use thiserror::Error;

/// Errors raised by the laboratory. The variants map onto the CLI exit codes:
/// input problems are validation failures, everything else is numerical.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("class not hyperbolic (|trace| = {trace:.12})")]
    NotHyperbolic { trace: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("hessian not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("{0}")]
    Io(String),
}

impl LabError {
    pub fn input(msg: impl Into<String>) -> Self {
        LabError::InvalidInput(msg.into())
    }

    /// True for failures caused by the caller's input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, LabError::InvalidInput(_) | LabError::Domain(_) | LabError::Io(_))
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
