use thiserror::Error;

/// Failures raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A documented precondition of an operation was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("input {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("function is not invertible: {0}")]
    NotInvertible(String),

    /// The right-hand matrix of a generalized eigenproblem is not positive
    /// definite; in MDIR this means the reference branch lacks excitation.
    #[error("singular pencil: {0}")]
    SingularPencil(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unstable filter: spectral radius {radius:.6} >= 1 - 1e-6")]
    Unstable { radius: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
