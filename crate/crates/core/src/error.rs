use crate::vecspace::{Subspace, Vector};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("function is not convex: {0}")]
    NotConvex(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("subgradient oracle returned an invalid subgradient at {point:?}")]
    InvalidSubgradient { point: Vec<f64> },

    #[error("rank did not stabilize within {samples} samples (partial rank {})", partial.dim())]
    Inconclusive { samples: usize, partial: Box<Subspace> },

    #[error("inconsistent characterizations: {0}")]
    Inconsistent(String),

    #[error("function is affine along direction {:?}", .0.as_slice())]
    FlatDirection(Vector),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("function spec: {0}")]
    Spec(String),
}
