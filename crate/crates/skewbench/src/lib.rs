//! File formats, experiment configuration and the command-line runner built
//! on `skewbench-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod fsio;
pub mod idx;
pub mod labels;
pub mod pipeline;
pub mod reports;
pub mod tables;

pub use error::{Error, Result};
