//! Batched jet propagation through an MLP.
//!
//! For a batch of `n` points and a set of input directions, every layer
//! carries `C = 1 + order * dirs` channels stacked row-wise into one
//! `(C * n) x width` matrix: the value channel first, then for each direction
//! its first (and, at order 2, second) derivative channel. A layer's affine
//! map is a single matrix product over all channels; the bias only enters
//! the value channel. Derivative channels pass through tanh by the chain
//! rule
//!
//! ```text
//! h'  = s z'            s  = 1 - tanh(z)^2
//! h'' = s z'' + s2 z'^2 s2 = -2 tanh(z) s
//! ```
//!
//! and the backward pass differentiates those expressions once more
//! (`s3 = ds2/dz = -2 s^2 + 4 tanh(z)^2 s`).

use std::cell::RefCell;

use matrixmultiply::dgemm;

use crate::error::{Error, Result};
use crate::nn::NetworkParams;

use super::GradientVector;

/// Which input-derivative channels to propagate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetSpec {
    pub dirs: Vec<usize>,
    pub order: u8,
}

impl JetSpec {
    pub fn value_only() -> Self {
        Self {
            dirs: Vec::new(),
            order: 0,
        }
    }

    pub fn new(dirs: Vec<usize>, order: u8) -> Self {
        Self { dirs, order }
    }

    pub fn channels(&self) -> usize {
        1 + self.order as usize * self.dirs.len()
    }

    /// Channel index of the derivative of order `ord` along `dirs[k]`.
    pub fn channel(&self, k: usize, ord: u8) -> usize {
        debug_assert!(ord <= self.order && k < self.dirs.len().max(1));
        if ord == 0 {
            0
        } else {
            1 + k * self.order as usize + (ord as usize - 1)
        }
    }

    /// Position of input axis `axis` in `dirs`.
    pub fn position(&self, axis: usize) -> Option<usize> {
        self.dirs.iter().position(|&d| d == axis)
    }

    fn validate(&self, input_dim: usize) -> Result<()> {
        if self.order > 2 {
            return Err(Error::usage(format!("derivative order {} not supported", self.order)));
        }
        if let Some(d) = self.dirs.iter().find(|&&d| d >= input_dim) {
            return Err(Error::usage(format!("direction {d} out of range for input dim {input_dim}")));
        }
        Ok(())
    }
}

/// Channel-major output jets: `data[c * n + i]` is channel `c` at point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jets {
    n: usize,
    spec: JetSpec,
    data: Vec<f64>,
}

impl Jets {
    pub fn new(n: usize, spec: JetSpec, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * spec.channels());
        Self { n, spec, data }
    }

    pub fn zeros(n: usize, spec: JetSpec) -> Self {
        let len = n * spec.channels();
        Self::new(n, spec, vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spec(&self) -> &JetSpec {
        &self.spec
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.n..(c + 1) * self.n]
    }

    pub fn value(&self) -> &[f64] {
        self.channel(0)
    }

    /// d/dx_axis channel. Panics if the axis was not propagated.
    pub fn d1(&self, axis: usize) -> &[f64] {
        let k = self.spec.position(axis).expect("axis not in jet spec");
        self.channel(self.spec.channel(k, 1))
    }

    pub fn d2(&self, axis: usize) -> &[f64] {
        let k = self.spec.position(axis).expect("axis not in jet spec");
        self.channel(self.spec.channel(k, 2))
    }
}

/// Anything that can produce jets at a batch of points: a network, or a
/// closed-form function standing in for one.
pub trait JetModel {
    fn input_dim(&self) -> usize;
    /// `points` is row-major `n x input_dim`.
    fn jets(&self, points: &[f64], spec: &JetSpec) -> Result<Jets>;
}

impl JetModel for NetworkParams {
    fn input_dim(&self) -> usize {
        NetworkParams::input_dim(self)
    }

    fn jets(&self, points: &[f64], spec: &JetSpec) -> Result<Jets> {
        Ok(forward_jets(self, points, spec)?.into_output())
    }
}

thread_local! {
    /// Recycled layer buffers. Training allocates the same few large
    /// matrices every step; reusing them avoids returning pages to the OS
    /// and faulting them back in.
    static SCRATCH: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

/// A zeroed buffer of length `len`, recycled when possible.
fn scratch(len: usize) -> Vec<f64> {
    let reused = SCRATCH.with(|p| {
        let mut pool = p.borrow_mut();
        let best = pool
            .iter()
            .enumerate()
            .filter(|(_, v)| v.capacity() >= len)
            .min_by_key(|(_, v)| v.capacity())
            .map(|(i, _)| i);
        best.map(|i| pool.swap_remove(i))
    });
    match reused {
        Some(mut v) => {
            v.clear();
            v.resize(len, 0.0);
            v
        }
        None => vec![0.0; len],
    }
}

fn recycle(v: Vec<f64>) {
    if v.capacity() >= 4096 {
        SCRATCH.with(|p| {
            let mut pool = p.borrow_mut();
            if pool.len() < 32 {
                pool.push(v);
            }
        });
    }
}

struct LayerCache {
    /// Layer input, `(C n) x fan_in`.
    input: Vec<f64>,
    /// Pre-activation, `(C n) x fan_out`.
    z: Vec<f64>,
    /// tanh of the value channel, `n x fan_out` (empty for the output layer).
    h: Vec<f64>,
}

/// Forward record sufficient to back-propagate any seed on the output jets.
pub struct BatchTrace<'a> {
    net: &'a NetworkParams,
    spec: JetSpec,
    n: usize,
    layers: Vec<LayerCache>,
    output: Jets,
}

/// `c = a * b` with explicit strides; shapes `m x k` times `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * ldc);
    // SAFETY: callers pass slices whose lengths cover the strided extents.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// Runs the batched forward pass, keeping the caches for [`BatchTrace::backward`].
pub fn forward_jets<'a>(
    net: &'a NetworkParams,
    points: &[f64],
    spec: &JetSpec,
) -> Result<BatchTrace<'a>> {
    let dim = net.input_dim();
    spec.validate(dim)?;
    if points.len() % dim != 0 {
        return Err(Error::usage(format!(
            "point buffer length {} is not a multiple of input dim {dim}",
            points.len()
        )));
    }
    let n = points.len() / dim;
    let channels = spec.channels();
    let order = spec.order as usize;

    // Input channels: coordinates, unit seeds along each direction, zero curvature.
    let mut input = scratch(channels * n * dim);
    input[..n * dim].copy_from_slice(points);
    if order > 0 {
        for (k, &axis) in spec.dirs.iter().enumerate() {
            let c = spec.channel(k, 1);
            for i in 0..n {
                input[(c * n + i) * dim + axis] = 1.0;
            }
        }
    }

    let last = net.slots().len() - 1;
    let mut layers = Vec::with_capacity(net.slots().len());
    for (l, slot) in net.slots().iter().enumerate() {
        let (fi, fo) = (slot.fan_in, slot.fan_out);
        let rows = channels * n;
        let mut z = scratch(rows * fo);
        // z = input * W^T, W stored fo x fi row-major
        gemm(rows, fi, fo, &input, (fi, 1), net.weights(l), (1, fi), &mut z, fo);
        let bias = net.biases(l);
        for row in z[..n * fo].chunks_exact_mut(fo) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::overflow(format!("batched forward pass, layer {l}")));
        }
        if l == last {
            layers.push(LayerCache {
                input,
                z,
                h: Vec::new(),
            });
            break;
        }

        let m = n * fo;
        let mut act = scratch(rows * fo);
        let (z0, zd) = z.split_at(m);
        let (a0, ad) = act.split_at_mut(m);
        for (a, &zv) in a0.iter_mut().zip(z0) {
            *a = zv.tanh();
        }
        if order > 0 {
            for k in 0..spec.dirs.len() {
                let c1 = (spec.channel(k, 1) - 1) * m;
                let z1 = &zd[c1..c1 + m];
                if order == 1 {
                    let a1 = &mut ad[c1..c1 + m];
                    for j in 0..m {
                        let h = a0[j];
                        a1[j] = (1.0 - h * h) * z1[j];
                    }
                } else {
                    let z2 = &zd[c1 + m..c1 + 2 * m];
                    let (a1, a2) = ad[c1..c1 + 2 * m].split_at_mut(m);
                    for j in 0..m {
                        let h = a0[j];
                        let s = 1.0 - h * h;
                        let s2 = -2.0 * h * s;
                        a1[j] = s * z1[j];
                        a2[j] = s * z2[j] + s2 * z1[j] * z1[j];
                    }
                }
            }
        }
        let mut h = scratch(m);
        h.copy_from_slice(&act[..m]);
        layers.push(LayerCache { input, z, h });
        input = act;
    }

    let out_z = &layers.last().unwrap().z;
    let output = Jets::new(n, spec.clone(), out_z.clone());
    Ok(BatchTrace {
        net,
        spec: spec.clone(),
        n,
        layers,
        output,
    })
}

impl<'a> BatchTrace<'a> {
    pub fn output(&self) -> &Jets {
        &self.output
    }

    pub fn into_output(mut self) -> Jets {
        let empty = Jets::new(0, self.spec.clone(), Vec::new());
        std::mem::replace(&mut self.output, empty)
    }

    /// Pulls back `seed` (d loss / d output channel, same layout as the
    /// output jets) to the parameter gradient.
    pub fn backward(&self, seed: &Jets) -> Result<GradientVector> {
        if seed.spec != self.spec || seed.n != self.n {
            return Err(Error::usage("seed jets do not match the forward trace"));
        }
        let net = self.net;
        let n = self.n;
        let channels = self.spec.channels();
        let order = self.spec.order as usize;
        let rows = channels * n;
        let mut grad = vec![0.0; net.total_count()];

        // gradient w.r.t. the current layer's pre-activation, (C n) x fan_out
        let mut gz = scratch(seed.data.len());
        gz.copy_from_slice(&seed.data);
        for l in (0..self.layers.len()).rev() {
            let slot = net.slots()[l];
            let (fi, fo) = (slot.fan_in, slot.fan_out);
            let cache = &self.layers[l];
            if l != self.layers.len() - 1 {
                tanh_backward(&mut gz, cache, &self.spec, n, fo, order);
            }
            // dW = gz^T * input  (fo x fi)
            let dw = &mut grad[slot.weight_offset..slot.bias_offset];
            gemm(fo, rows, fi, &gz, (1, fo), &cache.input, (fi, 1), dw, fi);
            let db = &mut grad[slot.bias_offset..slot.bias_offset + fo];
            for row in gz[..n * fo].chunks_exact(fo) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            if l > 0 {
                let mut ga = scratch(rows * fi);
                gemm(rows, fo, fi, &gz, (fo, 1), net.weights(l), (fi, 1), &mut ga, fi);
                recycle(std::mem::replace(&mut gz, ga));
            }
        }
        recycle(gz);
        let g = GradientVector::from_vec(grad);
        g.ensure_finite("batched backward pass")?;
        Ok(g)
    }
}

impl Drop for BatchTrace<'_> {
    fn drop(&mut self) {
        for layer in self.layers.drain(..) {
            recycle(layer.input);
            recycle(layer.z);
            recycle(layer.h);
        }
    }
}

/// Converts gradients w.r.t. tanh outputs (all channels) into gradients
/// w.r.t. the pre-activations, in place.
fn tanh_backward(g: &mut [f64], cache: &LayerCache, spec: &JetSpec, n: usize, fo: usize, order: usize) {
    let m = n * fo;
    let h = &cache.h;
    let z = &cache.z;
    let (g0, gd) = g.split_at_mut(m);
    let zd = &z[m..];
    // value channel: direct term first, derivative-channel couplings added below
    let mut acc = scratch(m);
    for ((a, gv), hv) in acc.iter_mut().zip(g0.iter()).zip(h) {
        *a = gv * (1.0 - hv * hv);
    }
    if order > 0 {
        for k in 0..spec.dirs.len() {
            let c1 = (spec.channel(k, 1) - 1) * m;
            if order == 1 {
                let z1 = &zd[c1..c1 + m];
                let g1 = &mut gd[c1..c1 + m];
                for j in 0..m {
                    let hv = h[j];
                    let s = 1.0 - hv * hv;
                    let s2 = -2.0 * hv * s;
                    acc[j] += g1[j] * z1[j] * s2;
                    g1[j] *= s;
                }
            } else {
                let z1 = &zd[c1..c1 + m];
                let z2 = &zd[c1 + m..c1 + 2 * m];
                let (g1, g2) = gd[c1..c1 + 2 * m].split_at_mut(m);
                for j in 0..m {
                    let hv = h[j];
                    let s = 1.0 - hv * hv;
                    let s2 = -2.0 * hv * s;
                    let s3 = -2.0 * s * s + 4.0 * hv * hv * s;
                    let (a1, a2) = (g1[j], g2[j]);
                    acc[j] += a1 * z1[j] * s2 + a2 * (z2[j] * s2 + z1[j] * z1[j] * s3);
                    g1[j] = a1 * s + a2 * 2.0 * s2 * z1[j];
                    g2[j] = a2 * s;
                }
            }
        }
    }
    g0.copy_from_slice(&acc);
    recycle(acc);
}
