use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Manifold, PdeProblem, Point};
use crate::error::{Error, Result};

/// RNG stream reserved for point sampling, so a shared seed does not
/// correlate sample points with network initialisation.
const SAMPLING_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCounts {
    pub residual: usize,
    /// One count per condition, in the problem's condition order.
    pub conditions: Vec<usize>,
}

impl SampleCounts {
    pub fn uniform(residual: usize, per_condition: usize, m: usize) -> Self {
        Self {
            residual,
            conditions: vec![per_condition; m],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub collocation: Vec<Point>,
    pub conditions: Vec<Vec<Point>>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn on_manifold(rng: &mut ChaCha8Rng, m: &Manifold, bounds: [(f64, f64); 2]) -> Point {
    let level = m.levels[rng.random_range(0..m.levels.len())];
    let mut p = [0.0; 2];
    for (axis, b) in bounds.into_iter().enumerate() {
        p[axis] = if axis == m.fixed_axis { level } else { uniform(rng, b) };
    }
    p
}

/// Uniform interior collocation points plus uniform points on each
/// condition manifold. Deterministic in `seed`.
pub fn sample_batch(problem: &PdeProblem, counts: &SampleCounts, seed: u64) -> Result<SampleBatch> {
    if counts.residual == 0 {
        return Err(Error::config("n_residual", "must be positive"));
    }
    if counts.conditions.len() != problem.condition_count() {
        return Err(Error::config(
            "n_condition",
            format!(
                "{} counts given for {} conditions",
                counts.conditions.len(),
                problem.condition_count()
            ),
        ));
    }
    if let Some(i) = counts.conditions.iter().position(|&c| c == 0) {
        return Err(Error::config(
            "n_condition",
            format!("count for condition '{}' must be positive", problem.conditions[i].label),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLING_STREAM);
    let bounds = problem.bounds();
    let collocation = (0..counts.residual)
        .map(|_| [uniform(&mut rng, bounds[0]), uniform(&mut rng, bounds[1])])
        .collect();
    let conditions = problem
        .conditions
        .iter()
        .zip(&counts.conditions)
        .map(|(c, &n)| (0..n).map(|_| on_manifold(&mut rng, &c.manifold, bounds)).collect())
        .collect();
    Ok(SampleBatch {
        collocation,
        conditions,
    })
}
