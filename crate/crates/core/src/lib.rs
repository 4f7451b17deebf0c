//! Allocation-only core of `skewbench`.
//!
//! Everything here is pure computation over in-memory values: no files, no
//! clocks, no global RNG. The `skewbench` crate layers IO, configuration and
//! the command-line runner on top.
//!
//! Class indices are zero-based throughout; index 0 is the most frequent
//! class after any imbalance implantation.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod boundary;
pub mod data;
pub mod diagnostics;
mod error;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
