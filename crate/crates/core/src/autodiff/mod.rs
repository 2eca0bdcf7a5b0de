//! Differentiation engines.
//!
//! Two routes compute the same quantities:
//!
//! * [`tape`]: a general scalar engine. Every [`DualScalar`] carries a value
//!   plus first and second derivatives along one input direction, and is
//!   recorded on a [`Tape`] so parameter gradients of any expression built
//!   from it can be pulled back.
//! * [`batch`]: a batched MLP-specific engine that propagates the same
//!   (value, d1, d2) channels through whole layers with matrix products and
//!   back-propagates hand-derived adjoints. Training uses this one; the
//!   scalar engine is its reference.

pub mod batch;
pub mod tape;

pub use batch::{forward_jets, BatchTrace, JetModel, JetSpec, Jets};
pub use tape::{eval_with_input_derivs, grad_wrt_params, DualScalar, Tape, TapedNetwork};

use crate::error::{Error, Result};

/// Flat gradient with one entry per network parameter, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::overflow(format!("{context}: gradient entry {i}"))),
            None => Ok(()),
        }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &GradientVector) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::usage(format!(
                "gradient length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
        Ok(())
    }
}

/// Returns `c * g` elementwise. Used to check the identity
/// grad(c * L) == c * grad(L).
pub fn grad_linearity_check(g: &GradientVector, c: f64) -> GradientVector {
    GradientVector(g.0.iter().map(|v| c * v).collect())
}
