//! Commuting operator-valued multishifts on truncations of `N^d`.
//!
//! The crate builds weight systems `A^(j)_alpha` on a graded window
//! `|alpha| <= N`, evaluates the truncated shift tuple, its moment operators
//! and Gram family, and runs the structural, function-theoretic and
//! unitary-equivalence checks on top of them.

pub mod analytic;
pub mod cli;
pub mod equivalence;
pub mod error;
pub mod factory;
pub mod json;
pub mod lattice;
pub mod linalg;
pub mod sampling;
pub mod shift;
pub mod structure;
pub mod tree;
pub mod weights;

pub use error::{Error, Result};
pub use lattice::{MultiIndex, TruncationBox};
pub use linalg::{CMatrix, CVector};
pub use weights::{FiberMap, WeightFamily};
