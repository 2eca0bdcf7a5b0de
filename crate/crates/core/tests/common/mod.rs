//! Brute-force oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls into the library's derivative or weighting
//! code: finite differences go through `NetworkParams::predict`, and the
//! weighting oracle is a direct transcription of the update loop.

#![allow(dead_code)]

use dbpinn::nn::{init_network, NetworkParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - b| <= rtol * max(|a|, |b|) + atol`
pub fn close(a: f64, b: f64, rtol: f64, atol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()) + atol
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// A random tanh network with 2 inputs, one or two hidden layers of 2..=8
/// units, and perturbed (nonzero) biases.
pub fn random_net(r: &mut ChaCha8Rng) -> NetworkParams {
    let mut sizes = vec![2];
    for _ in 0..r.random_range(1..=2) {
        sizes.push(r.random_range(2..=8));
    }
    sizes.push(1);
    let net = init_network(&sizes, r.random()).unwrap();
    let values = net.values().iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
    NetworkParams::from_values(&sizes, values).unwrap()
}

pub fn random_point(r: &mut ChaCha8Rng) -> [f64; 2] {
    [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]
}

fn shifted(p: [f64; 2], axis: usize, h: f64) -> [f64; 2] {
    let mut q = p;
    q[axis] += h;
    q
}

/// Central differences of the network output along one input axis:
/// `(d1, d2)`.
pub fn fd_input_derivs(net: &NetworkParams, p: [f64; 2], axis: usize, h: f64) -> (f64, f64) {
    let f = |q: [f64; 2]| net.predict(&q).unwrap();
    let (fp, f0, fm) = (f(shifted(p, axis, h)), f(p), f(shifted(p, axis, -h)));
    ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
}

/// Central differences of `loss` with respect to every parameter.
pub fn fd_param_grad(net: &NetworkParams, h: f64, loss: impl Fn(&NetworkParams) -> f64) -> Vec<f64> {
    let sizes = net.layer_sizes().to_vec();
    let base = net.values().to_vec();
    (0..base.len())
        .map(|k| {
            let mut plus = base.clone();
            plus[k] += h;
            let mut minus = base.clone();
            minus[k] -= h;
            let lp = loss(&NetworkParams::from_values(&sizes, plus).unwrap());
            let lm = loss(&NetworkParams::from_values(&sizes, minus).unwrap());
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

/// Second derivative of `u` along `axis` at `p`, by central differences of
/// a closed-form function.
pub fn fd_second(u: impl Fn([f64; 2]) -> f64, p: [f64; 2], axis: usize, h: f64) -> f64 {
    (u(shifted(p, axis, h)) - 2.0 * u(p) + u(shifted(p, axis, -h))) / (h * h)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleStat {
    Mean,
    Std,
    Kurtosis,
}

fn moments(g: &[f64]) -> (f64, f64) {
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let m2 = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = g.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m2, m4)
}

pub fn oracle_num(g: &[f64], stat: OracleStat) -> f64 {
    match stat {
        OracleStat::Mean => g.iter().map(|v| v.abs()).fold(0.0, f64::max),
        OracleStat::Std => moments(g).0.sqrt(),
        OracleStat::Kurtosis => {
            let (m2, m4) = moments(g);
            m4 / (m2 * m2)
        }
    }
}

pub fn oracle_den(g: &[f64], stat: OracleStat) -> f64 {
    match stat {
        OracleStat::Mean => g.iter().map(|v| v.abs()).sum::<f64>() / g.len() as f64,
        _ => oracle_num(g, stat),
    }
}

/// One scripted step: condition losses, residual gradient, condition
/// gradients.
#[derive(Clone, Debug)]
pub struct ScriptedStep {
    pub losses: Vec<f64>,
    pub g_r: Vec<f64>,
    pub g_conditions: Vec<Vec<f64>>,
}

pub fn scripted_steps(r: &mut ChaCha8Rng, steps: usize, m: usize, p: usize) -> Vec<ScriptedStep> {
    (0..steps)
        .map(|_| ScriptedStep {
            losses: (0..m).map(|_| r.random_range(0.01..5.0)).collect(),
            g_r: (0..p).map(|_| r.random_range(-2.0..2.0)).collect(),
            g_conditions: (0..m)
                .map(|i| {
                    let s = 0.1 * (i + 1) as f64;
                    (0..p).map(|_| s * r.random_range(-1.0..1.0)).collect()
                })
                .collect(),
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum OracleRule {
    RunningMean,
    Ema(f64),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleAllocation {
    /// dual-balanced: aggregate then split by difficulty
    Difficulty,
    /// aggregate then split evenly
    Even,
    /// one ratio per condition
    PerCondition,
}

/// Straight-line weighting loop. Returns the weight vector after every
/// step.
pub fn weighting_oracle(
    steps: &[ScriptedStep],
    stat: OracleStat,
    allocation: OracleAllocation,
    rule: OracleRule,
) -> Vec<Vec<f64>> {
    let m = steps[0].losses.len();
    let mut lambda = vec![1.0; m];
    let mut mu = steps[0].losses.clone();
    let mut trajectory = Vec::new();
    for (k, s) in steps.iter().enumerate() {
        let t = (k + 1) as f64;
        let num = oracle_num(&s.g_r, stat);
        let ratios: Vec<f64> = (0..m)
            .map(|i| {
                let scaled: Vec<f64> = s.g_conditions[i].iter().map(|v| lambda[i] * v).collect();
                num / oracle_den(&scaled, stat)
            })
            .collect();
        let big_g: f64 = ratios.iter().sum();
        for i in 0..m {
            mu[i] = (1.0 - 1.0 / t) * mu[i] + (1.0 / t) * s.losses[i];
        }
        let difficulty: Vec<f64> = (0..m).map(|i| s.losses[i] / mu[i]).collect();
        let total: f64 = difficulty.iter().sum();
        let hat: Vec<f64> = match allocation {
            OracleAllocation::Difficulty => difficulty.iter().map(|d| d / total * big_g).collect(),
            OracleAllocation::Even => vec![big_g / m as f64; m],
            OracleAllocation::PerCondition => ratios,
        };
        for i in 0..m {
            lambda[i] = match rule {
                OracleRule::RunningMean => (1.0 - 1.0 / t) * lambda[i] + (1.0 / t) * hat[i],
                OracleRule::Ema(a) => (1.0 - a) * lambda[i] + a * hat[i],
            };
        }
        trajectory.push(lambda.clone());
    }
    trajectory
}
