//! Scalar second-order forward propagation composed with a reverse-mode
//! parameter tape.
//!
//! A [`DualScalar`] holds `(value, d1, d2)`: a quantity and its first and
//! second derivatives along one input direction. Each operation that depends
//! on a recorded quantity pushes a node holding the 3x3 local Jacobian of the
//! output triple with respect to each operand triple. Pulling the value
//! channel of a loss back to the parameter leaves gives the parameter
//! gradient of expressions that contain input derivatives.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::nn::NetworkParams;

use super::GradientVector;

type Jacobian = [[f64; 3]; 3];

const IDENTITY: Jacobian = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone)]
struct Node {
    parents: [Option<(usize, Jacobian)>; 2],
}

/// Append-only record of the computation. Confined to one thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A value with no parameter dependence and zero input derivatives.
    pub fn constant(&self, value: f64) -> DualScalar<'_> {
        DualScalar {
            tape: self,
            value,
            d1: 0.0,
            d2: 0.0,
            node: None,
        }
    }

    /// An input coordinate. The seed direction has `d1 = 1, d2 = 0`.
    pub fn input(&self, value: f64, seeded: bool) -> DualScalar<'_> {
        DualScalar {
            d1: if seeded { 1.0 } else { 0.0 },
            ..self.constant(value)
        }
    }

    /// A parameter leaf recorded on the tape.
    pub fn leaf(&self, value: f64) -> DualScalar<'_> {
        let node = self.push(Node {
            parents: [None, None],
        });
        DualScalar {
            node: Some(node),
            ..self.constant(value)
        }
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Adjoint triples of every node, seeded with `d loss / d loss.value = 1`.
    fn pullback(&self, root: usize) -> Vec<[f64; 3]> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![[0.0; 3]; root + 1];
        adj[root][0] = 1.0;
        for i in (0..=root).rev() {
            let a = adj[i];
            if a == [0.0; 3] {
                continue;
            }
            for (p, jac) in nodes[i].parents.iter().flatten() {
                let target = &mut adj[*p];
                for c in 0..3 {
                    target[c] += a[0] * jac[0][c] + a[1] * jac[1][c] + a[2] * jac[2][c];
                }
            }
        }
        adj
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DualScalar<'t> {
    tape: &'t Tape,
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    node: Option<usize>,
}

impl<'t> DualScalar<'t> {
    pub fn tape_node(&self) -> Option<usize> {
        self.node
    }

    pub fn triple(&self) -> [f64; 3] {
        [self.value, self.d1, self.d2]
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    fn record(
        self,
        out: [f64; 3],
        a: Option<(usize, Jacobian)>,
        b: Option<(usize, Jacobian)>,
    ) -> DualScalar<'t> {
        let node = match (a, b) {
            (None, None) => None,
            (a, b) => Some(self.tape.push(Node { parents: [a, b] })),
        };
        DualScalar {
            tape: self.tape,
            value: out[0],
            d1: out[1],
            d2: out[2],
            node,
        }
    }

    fn unary(self, out: [f64; 3], jac: Jacobian) -> DualScalar<'t> {
        self.record(out, self.node.map(|n| (n, jac)), None)
    }

    fn binary(self, rhs: Self, out: [f64; 3], ja: Jacobian, jb: Jacobian) -> DualScalar<'t> {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape), "operands from different tapes");
        self.record(out, self.node.map(|n| (n, ja)), rhs.node.map(|n| (n, jb)))
    }

    /// tanh with derivatives from tanh' = 1 - tanh^2, tanh'' = -2 tanh tanh'.
    pub fn tanh(self) -> DualScalar<'t> {
        let h = self.value.tanh();
        let s = 1.0 - h * h;
        let s2 = -2.0 * h * s;
        let s3 = -2.0 * s * s + 4.0 * h * h * s;
        let (d1, d2) = (self.d1, self.d2);
        let out = [h, s * d1, s * d2 + s2 * d1 * d1];
        let jac = [
            [s, 0.0, 0.0],
            [s2 * d1, s, 0.0],
            [s2 * d2 + s3 * d1 * d1, 2.0 * s2 * d1, s],
        ];
        self.unary(out, jac)
    }

    pub fn square(self) -> DualScalar<'t> {
        self * self
    }

    pub fn cube(self) -> DualScalar<'t> {
        self * self * self
    }

    /// Drops derivative channels above `order`.
    pub fn truncate(self, order: u8) -> DualScalar<'t> {
        match order {
            0 => self.unary([self.value, 0.0, 0.0], [[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]]),
            1 => self.unary(
                [self.value, self.d1, 0.0],
                [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]],
            ),
            _ => self,
        }
    }

    /// The first-derivative channel as a new scalar's value channel.
    pub fn d1_as_value(self) -> DualScalar<'t> {
        self.unary([self.d1, 0.0, 0.0], [[0.0, 1.0, 0.0], [0.0; 3], [0.0; 3]])
    }

    /// The second-derivative channel as a new scalar's value channel.
    pub fn d2_as_value(self) -> DualScalar<'t> {
        self.unary([self.d2, 0.0, 0.0], [[0.0, 0.0, 1.0], [0.0; 3], [0.0; 3]])
    }
}

impl<'t> Add for DualScalar<'t> {
    type Output = DualScalar<'t>;
    fn add(self, rhs: Self) -> Self::Output {
        let out = [self.value + rhs.value, self.d1 + rhs.d1, self.d2 + rhs.d2];
        self.binary(rhs, out, IDENTITY, IDENTITY)
    }
}

impl<'t> Sub for DualScalar<'t> {
    type Output = DualScalar<'t>;
    fn sub(self, rhs: Self) -> Self::Output {
        let out = [self.value - rhs.value, self.d1 - rhs.d1, self.d2 - rhs.d2];
        let neg = [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        self.binary(rhs, out, IDENTITY, neg)
    }
}

impl<'t> Mul for DualScalar<'t> {
    type Output = DualScalar<'t>;
    fn mul(self, rhs: Self) -> Self::Output {
        let [f0, f1, f2] = self.triple();
        let [g0, g1, g2] = rhs.triple();
        let out = [f0 * g0, f1 * g0 + f0 * g1, f2 * g0 + 2.0 * f1 * g1 + f0 * g2];
        let ja = [[g0, 0.0, 0.0], [g1, g0, 0.0], [g2, 2.0 * g1, g0]];
        let jb = [[f0, 0.0, 0.0], [f1, f0, 0.0], [f2, 2.0 * f1, f0]];
        self.binary(rhs, out, ja, jb)
    }
}

impl<'t> Neg for DualScalar<'t> {
    type Output = DualScalar<'t>;
    fn neg(self) -> Self::Output {
        self * -1.0
    }
}

impl<'t> Add<f64> for DualScalar<'t> {
    type Output = DualScalar<'t>;
    fn add(self, rhs: f64) -> Self::Output {
        self.unary([self.value + rhs, self.d1, self.d2], IDENTITY)
    }
}

impl<'t> Sub<f64> for DualScalar<'t> {
    type Output = DualScalar<'t>;
    fn sub(self, rhs: f64) -> Self::Output {
        self + (-rhs)
    }
}

impl<'t> Mul<f64> for DualScalar<'t> {
    type Output = DualScalar<'t>;
    fn mul(self, c: f64) -> Self::Output {
        let jac = [[c, 0.0, 0.0], [0.0, c, 0.0], [0.0, 0.0, c]];
        self.unary([self.value * c, self.d1 * c, self.d2 * c], jac)
    }
}

impl<'t> Mul<DualScalar<'t>> for f64 {
    type Output = DualScalar<'t>;
    fn mul(self, rhs: DualScalar<'t>) -> Self::Output {
        rhs * self
    }
}

/// Network parameters registered as leaves on a tape, in canonical order.
pub struct TapedNetwork<'t, 'n> {
    tape: &'t Tape,
    params: &'n NetworkParams,
    leaves: Vec<DualScalar<'t>>,
    first_leaf: usize,
}

impl<'t, 'n> TapedNetwork<'t, 'n> {
    pub fn new(tape: &'t Tape, params: &'n NetworkParams) -> Self {
        let first_leaf = tape.len();
        let leaves = params.values().iter().map(|&v| tape.leaf(v)).collect();
        Self {
            tape,
            params,
            leaves,
            first_leaf,
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn params(&self) -> &'n NetworkParams {
        self.params
    }

    pub fn leaves(&self) -> &[DualScalar<'t>] {
        &self.leaves
    }
}

/// Evaluates the network at `point`, carrying derivatives along input axis
/// `direction` up to `order` (0, 1 or 2). The whole computation is recorded
/// on the network's tape.
pub fn eval_with_input_derivs<'t>(
    net: &TapedNetwork<'t, '_>,
    point: &[f64],
    direction: usize,
    order: u8,
) -> Result<DualScalar<'t>> {
    let params = net.params;
    if point.len() != params.input_dim() {
        return Err(Error::usage(format!(
            "point has {} coordinates, network expects {}",
            point.len(),
            params.input_dim()
        )));
    }
    if direction >= point.len() {
        return Err(Error::usage(format!("direction {direction} out of range")));
    }
    if order > 2 {
        return Err(Error::usage(format!("derivative order {order} not supported")));
    }
    let tape = net.tape;
    let mut act: Vec<DualScalar<'t>> = point
        .iter()
        .enumerate()
        .map(|(i, &x)| tape.input(x, order > 0 && i == direction))
        .collect();
    let last = params.slots().len() - 1;
    for (l, slot) in params.slots().iter().enumerate() {
        let w = &net.leaves[slot.weight_offset..slot.bias_offset];
        let b = &net.leaves[slot.bias_offset..slot.bias_offset + slot.fan_out];
        let mut next = Vec::with_capacity(slot.fan_out);
        for o in 0..slot.fan_out {
            let mut z = b[o];
            for (i, a) in act.iter().enumerate() {
                z = z + w[o * slot.fan_in + i] * *a;
            }
            let out = if l == last { z } else { z.tanh() };
            if !out.is_finite() {
                return Err(Error::overflow(format!("tape forward pass, layer {l}")));
            }
            next.push(out);
        }
        act = next;
    }
    Ok(act[0].truncate(order))
}

/// Gradient of `loss.value` with respect to every parameter of `net`.
/// The tape is not modified, so repeated calls agree.
pub fn grad_wrt_params(loss: &DualScalar<'_>, net: &TapedNetwork<'_, '_>) -> Result<GradientVector> {
    if !std::ptr::eq(loss.tape, net.tape) {
        return Err(Error::usage("loss was recorded on a different tape"));
    }
    let n = net.leaves.len();
    let Some(root) = loss.node else {
        return Ok(GradientVector::zeros(n));
    };
    if root < net.first_leaf {
        return Err(Error::usage("loss precedes the network parameters on the tape"));
    }
    let adj = net.tape.pullback(root);
    let entries = (0..n)
        .map(|k| adj.get(net.first_leaf + k).map_or(0.0, |a| a[0]))
        .collect();
    let g = GradientVector::from_vec(entries);
    g.ensure_finite("tape pullback")?;
    Ok(g)
}
