//! Bilinear knowledge-graph embeddings with unit-spectral-radius relations.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod evaluator;
pub mod kg_store;
pub mod linalg;
pub mod model;
pub mod trainer;

pub use error::{Error, Result};
