//! Crate-wide error type. Every fallible operation returns [`Result`];
//! invalid shapes and parameter values are rejected eagerly so numerical
//! kernels can assume well-formed input.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter value violates the operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two arguments have incompatible shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The request would allocate or iterate past the configured budget.
    /// The message names the cheaper alternative when one exists.
    #[error("resource budget exceeded: {0}")]
    Budget(String),

    /// A numerical routine could not produce a trustworthy answer
    /// (non-finite entries, failed factorisation, empty probe set, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Symmetric square root rejected its input; `layer` is the 1-based
    /// kernel layer whose matrix was being factored, 0 when outside a
    /// layer recursion.
    #[error("matrix square root failed (layer {layer}): {detail}")]
    MatrixSqrt { layer: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
