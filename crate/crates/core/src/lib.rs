#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod corpus;
pub mod critic;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod filterpipe;
pub mod gmm;
pub mod nn;
pub mod rng;
pub mod sampling;
pub mod synthgen;

pub use error::{Error, Result};
