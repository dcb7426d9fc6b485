use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("feature norm {norm} exceeds 1")]
    InvalidFeature { norm: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("instance generation failed: {0}")]
    GenerationFailure(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(invalid(format!("{what}: expected length {want}, got {got}")))
    }
}
