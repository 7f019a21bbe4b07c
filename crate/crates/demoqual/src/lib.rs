//! File formats, run configuration and the `demoqual` command-line driver.

pub mod artifact;
pub mod cli;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod output;
pub mod pipeline;

pub use error::{CliError, Result};
