//! Shared error type for every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("edge is unbounded: relaxing the bound never makes another constraint tight")]
    UnboundedEdge,

    #[error("edge is blocked: no feasible move in the requested direction")]
    BlockedEdge,

    #[error("variable {0} is not at a tight bound of the vertex")]
    NotTightBound(usize),

    #[error("objective is unbounded over the feasible region")]
    UnboundedObjective,

    #[error("graph is not {expected}-regular: vertex {vertex} on the {side} side has degree {degree}")]
    NotRegular {
        expected: usize,
        vertex: usize,
        side: &'static str,
        degree: usize,
    },

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
