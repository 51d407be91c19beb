use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("d d does not vanish starting at degree {degree} (max entry {residual:.3e})")]
    NotAComplex { degree: usize, residual: f64 },
    #[error("metric in degree {0} is not Hermitian positive definite")]
    NotPositive(usize),
    #[error("eigensolver did not converge in degree {degree}: {detail}")]
    Eigensolve { degree: usize, detail: String },
    #[error("sequence not exact at position {position}: rank defect {defect}")]
    Inexact { position: usize, defect: i64 },
    #[error("flat bundle violates flatness on 2-cell {cell} (deviation {deviation:.3e})")]
    NotFlat { cell: usize, deviation: f64 },
    #[error("complex is not acyclic: degree {degree} has cohomology of dimension {dim}")]
    NotAcyclic { degree: usize, dim: usize },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("zeta continuation failed: {0}")]
    Continuation(String),
    #[error("truncation K={k} too small, need at least {needed} terms")]
    Truncation { k: usize, needed: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// Errors caused by bad parameters rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::Shape(_) | Error::Unsupported(_) | Error::NotPositive(_)
        )
    }
}
