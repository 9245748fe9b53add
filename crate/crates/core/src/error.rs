use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integer overflow: {0}")]
    Arithmetic(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("insufficient resolution: {message} (suggested grid size {suggested_size})")]
    Resolution { message: String, suggested_size: usize },
    #[error("ill-posed functional: {0}")]
    IllPosed(String),
    #[error("ill-conditioned: {0}")]
    Conditioning(String),
    #[error("no admissible solution: {0}")]
    NoAdmissibleSolution(String),
    #[error("iteration limit reached after {iterations} iterations (residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Arithmetic(_) => "arithmetic",
            Error::NumericalFailure(_) => "numerical-failure",
            Error::Factorization(_) => "factorization-error",
            Error::Resolution { .. } => "resolution-error",
            Error::IllPosed(_) => "ill-posed-functional",
            Error::Conditioning(_) => "conditioning-error",
            Error::NoAdmissibleSolution(_) => "no-admissible-solution",
            Error::IterationLimit { .. } => "iteration-limit",
        }
    }

    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::IllPosed(_))
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
