//! Replicable statistical algorithms.
//!
//! An algorithm is replicable when two runs that share their internal random
//! string but see independent samples return the same output with high
//! probability. This crate implements replicable coin testing, statistical
//! queries, heavy hitters, composition of replicable subroutines, tiling-based
//! rounding for mean estimation and pseudo-maximum identification, together
//! with a paired-run harness that measures these guarantees empirically.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coin;
pub mod compose;
pub mod error;
pub mod harness;
pub mod heavyhitters;
pub mod maxid;
pub mod meanest;
pub mod randomness;
pub mod statq;
pub mod tiling;
mod util;

pub use error::{Error, Result};
pub use randomness::SharedRandomness;
