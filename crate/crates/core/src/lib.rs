//! Globally consistent Euclidean embeddings from local distance graphs.

pub mod cli;
pub mod embed;
pub mod error;
pub mod frames;
pub mod graph;
pub mod io;
pub mod linsolve;
pub mod metrics;
pub mod operators;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
