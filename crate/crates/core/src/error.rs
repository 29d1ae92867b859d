use thiserror::Error;

/// Failure modes of the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A projective kick removed the whole state.
    #[error("projection on site {site} annihilated the state")]
    AnnihilatedState { site: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
