use crate::autodiff::GradientVector;
use crate::error::{Error, Result};

use super::NetworkParams;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the usual defaults (0.9, 0.999, 1e-8).
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step(
    params: &mut NetworkParams,
    grad: &GradientVector,
    state: &mut AdamState,
) -> Result<()> {
    let n = params.total_count();
    if grad.len() != n || state.first_moment.len() != n {
        return Err(Error::usage(format!(
            "adam: gradient length {}, state length {}, parameter count {n}",
            grad.len(),
            state.first_moment.len()
        )));
    }
    if let Some(i) = grad.entries().iter().position(|g| !g.is_finite()) {
        return Err(Error::overflow(format!("adam: gradient entry {i}")));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;
    let m = &mut state.first_moment;
    let v = &mut state.second_moment;
    for (((p, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grad.entries())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
