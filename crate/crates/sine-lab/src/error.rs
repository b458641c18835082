use std::fmt;

/// Everything that can go wrong inside the laboratory.
///
/// Variants are grouped by cause rather than by module: a resolution problem
/// looks the same whether it was detected while building an operator or while
/// sampling from it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The quadrature grid is too coarse for the sine kernel.
    #[error("resolution error: {0}")]
    Resolution(String),
    /// The discretized operator violates `0 <= K <= 1` beyond tolerance.
    #[error("discretization failure: {0}")]
    Discretization(String),
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A function was paired in `H^{1/2}` but does not belong to that space.
    #[error("not in H^1/2: {0}")]
    NotInH12(String),
    /// An integral that must converge does not.
    #[error("divergent integral: {0}")]
    Divergence(String),
    /// A size or order guard was exceeded, or too few samples were given.
    #[error("size error: {0}")]
    Size(String),
    /// The sequential sampler hit repeated singular updates.
    #[error("degeneracy: {0}")]
    Degeneracy(String),
    /// A random-matrix window does not fit inside the unfolded bulk.
    #[error("coverage error: {0}")]
    Coverage(String),
    /// An adaptive quadrature did not settle.
    #[error("accuracy error: {0}")]
    Accuracy(String),
    /// A determinant under- or overflowed.
    #[error("rescaling error: {0}")]
    Rescaling(String),
    /// An experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),
    /// A file could not be read or parsed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Shorthand used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl fmt::Display) -> Error {
    Error::Domain(msg.to_string())
}
