//! Search over multi-task feature-partitioning strategies.
//!
//! A partitioning strategy is described by a small symmetric matrix of
//! per-task channel usage and pairwise sharing ([`partition::SharingSpec`]).
//! The crate maps such matrices onto feasible constraints, synthesizes binary
//! channel masks that realize them, scores them with pluggable evaluators and
//! optimizes them with random sampling or evolutionary strategies.

pub mod error;
pub mod eval;
pub mod harness;
pub mod partition;
pub mod search;
pub mod synthesis;

pub use error::{Error, Result};
