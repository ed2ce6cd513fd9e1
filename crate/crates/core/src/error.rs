use thiserror::Error;

use crate::lattice::MultiIndex;

/// Errors raised by the multishift toolkit.
///
/// Axis fields hold zero-based axes; messages print them one-based.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid truncation box: {0}")]
    InvalidBox(String),

    #[error("axis {} out of range for dimension {d}", .axis + 1)]
    Axis { axis: usize, d: usize },

    #[error("fiber dimension at {alpha} must be at least 1, got {dim}")]
    Fiber { alpha: MultiIndex, dim: usize },

    #[error("weight j={} at alpha={alpha}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}", .j + 1)]
    Shape {
        j: usize,
        alpha: MultiIndex,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("missing weight j={} at alpha={alpha}", .j + 1)]
    MissingWeight { j: usize, alpha: MultiIndex },

    #[error("weight j={} at alpha={alpha} is not square ({rows}x{cols})", .j + 1)]
    NotSquare {
        j: usize,
        alpha: MultiIndex,
        rows: usize,
        cols: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("box error: {0}")]
    Box(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("problem error: {0}")]
    Problem(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("tree error: {0}")]
    Tree(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
