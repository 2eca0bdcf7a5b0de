//! Physics-informed neural networks with dual-balanced adaptive loss weighting.

pub mod autodiff;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod pde;
pub mod train;
pub mod weighting;

pub use error::{Error, Result};
