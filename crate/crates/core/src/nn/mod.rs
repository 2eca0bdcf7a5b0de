//! Multilayer perceptron with tanh hidden layers and a linear output head.
//!
//! Parameters live in one flat vector. The canonical order is, for each layer
//! in turn, the weight matrix (`fan_out x fan_in`, row-major) followed by the
//! bias vector (`fan_out`). Every gradient vector in the crate uses the same
//! order.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Location of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSlot {
    pub fn weight_len(&self) -> usize {
        self.fan_in * self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    slots: Vec<LayerSlot>,
    values: Vec<f64>,
}

fn layout(layer_sizes: &[usize]) -> Result<(Vec<LayerSlot>, usize)> {
    if layer_sizes.len() < 2 {
        return Err(Error::config(
            "layer_sizes",
            "need at least an input and an output size",
        ));
    }
    if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
        return Err(Error::config(
            "layer_sizes",
            format!("layer {pos} has size 0"),
        ));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::config("layer_sizes", "output size must be 1"));
    }
    let mut slots = Vec::with_capacity(layer_sizes.len() - 1);
    let mut offset = 0;
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let slot = LayerSlot {
            fan_in,
            fan_out,
            weight_offset: offset,
            bias_offset: offset + fan_in * fan_out,
        };
        offset = slot.bias_offset + fan_out;
        slots.push(slot);
    }
    Ok((slots, offset))
}

/// Number of parameters of an MLP with the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> Result<usize> {
    layout(layer_sizes).map(|(_, n)| n)
}

/// Glorot-uniform weights, zero biases. Identical seeds give bitwise identical
/// parameters.
pub fn init_network(layer_sizes: &[usize], seed: u64) -> Result<NetworkParams> {
    let (slots, total) = layout(layer_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; total];
    for slot in &slots {
        let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
        for w in &mut values[slot.weight_offset..slot.bias_offset] {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(NetworkParams {
        layer_sizes: layer_sizes.to_vec(),
        slots,
        values,
    })
}

impl NetworkParams {
    /// Builds a network from explicit parameter values in canonical order.
    pub fn from_values(layer_sizes: &[usize], values: Vec<f64>) -> Result<Self> {
        let (slots, total) = layout(layer_sizes)?;
        if values.len() != total {
            return Err(Error::usage(format!(
                "expected {total} parameters for {layer_sizes:?}, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::overflow(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            slots,
            values,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn slots(&self) -> &[LayerSlot] {
        &self.slots
    }

    pub fn total_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let s = &self.slots[layer];
        &self.values[s.weight_offset..s.bias_offset]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let s = &self.slots[layer];
        &self.values[s.bias_offset..s.bias_offset + s.fan_out]
    }

    /// Plain single-point forward pass (value only).
    pub fn predict(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.input_dim() {
            return Err(Error::usage(format!(
                "point has {} coordinates, network expects {}",
                point.len(),
                self.input_dim()
            )));
        }
        let mut act = point.to_vec();
        let last = self.slots.len() - 1;
        for (l, slot) in self.slots.iter().enumerate() {
            let w = self.weights(l);
            let b = self.biases(l);
            let mut next = Vec::with_capacity(slot.fan_out);
            for o in 0..slot.fan_out {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                let z = row.iter().zip(&act).map(|(a, x)| a * x).sum::<f64>() + b[o];
                next.push(if l == last { z } else { z.tanh() });
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::overflow(format!("forward pass, layer {l}")));
            }
            act = next;
        }
        Ok(act[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_layer_count_and_zero_bias() {
        let net = init_network(&[1, 1], 42).unwrap();
        assert_eq!(net.total_count(), 2);
        assert_eq!(net.biases(0), &[0.0]);
    }

    #[test]
    fn paper_sized_count() {
        assert_eq!(param_count(&[2, 50, 50, 1]).unwrap(), 2751);
        let net = init_network(&[2, 50, 50, 1], 0).unwrap();
        assert_eq!(net.total_count(), 2751);
    }

    #[test]
    fn same_seed_same_params() {
        let a = init_network(&[2, 20, 20, 1], 7).unwrap();
        let b = init_network(&[2, 20, 20, 1], 7).unwrap();
        let c = init_network(&[2, 20, 20, 1], 8).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn glorot_bounds() {
        let net = init_network(&[2, 30, 1], 3).unwrap();
        let limit = (6.0f64 / 32.0).sqrt();
        assert!(net.weights(0).iter().all(|w| w.abs() < limit));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(init_network(&[], 0), Err(Error::Config { .. })));
        assert!(matches!(init_network(&[2], 0), Err(Error::Config { .. })));
        assert!(matches!(init_network(&[2, 0, 1], 0), Err(Error::Config { .. })));
    }

    #[test]
    fn linear_head_without_hidden_layers() {
        let net = NetworkParams::from_values(&[1, 1], vec![0.75, -0.2]).unwrap();
        let x = 1.3;
        assert_eq!(net.predict(&[x]).unwrap(), 0.75 * x - 0.2);
    }
}
