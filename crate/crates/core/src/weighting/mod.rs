//! Loss-weighting strategies.
//!
//! All strategies weight condition losses against the PDE residual loss,
//! which keeps weight 1:
//!
//! ```text
//! L_total = L_r + sum_i lambda_i L_i
//! ```
//!
//! * `equal`: every `lambda_i = 1`.
//! * `gw`: each condition gets its own gradient ratio
//!   `stat_num(grad L_r) / stat_den(grad lambda_i L_i)`, smoothed by EMA.
//! * `db`: the ratios are summed into one aggregated weight `G`
//!   (inter-balancing), which is split across conditions in proportion to
//!   their difficulty indexes `I_i = L_i / running_mean(L_i)`
//!   (intra-balancing), and smoothed with a running mean.
//! * `db_avg`: as `db` but `G` is split evenly.
//! * `db_no_balance`: `gw` ratios smoothed with a running mean.

mod balancer;
mod stats;

pub use balancer::{BalancerState, LossVector, StepReport, Strategy, UpdateRule};
pub use stats::{grad_stat, GradStatistic, StatPosition};

use crate::autodiff::GradientVector;
use crate::error::{Error, Result};

fn scaled(g: &GradientVector, c: f64) -> Vec<f64> {
    g.entries().iter().map(|v| c * v).collect()
}

fn check_shapes(g_r: &GradientVector, g_conditions: &[GradientVector], lambdas: &[f64]) -> Result<()> {
    if g_conditions.is_empty() {
        return Err(Error::usage("at least one condition gradient is required"));
    }
    if g_conditions.len() != lambdas.len() {
        return Err(Error::usage(format!(
            "{} condition gradients but {} weights",
            g_conditions.len(),
            lambdas.len()
        )));
    }
    if g_conditions.iter().any(|g| g.len() != g_r.len()) {
        return Err(Error::usage("condition gradient length differs from residual gradient"));
    }
    Ok(())
}

/// Ratio `stat_num(g_r) / stat_den(lambda * g_i)`; `DegenerateStatistic`
/// when the denominator is zero or undefined.
fn gradient_ratio(numerator: f64, g_i: &GradientVector, lambda: f64, stat: GradStatistic) -> Result<f64> {
    let den = grad_stat(&scaled(g_i, lambda), stat, StatPosition::Denominator)?;
    if den == 0.0 {
        return Err(Error::DegenerateStatistic(format!("{stat} denominator is zero")));
    }
    let ratio = numerator / den;
    if !ratio.is_finite() {
        return Err(Error::overflow(format!("{stat} gradient ratio")));
    }
    Ok(ratio)
}

/// Total gradient ratio `G = sum_i stat_num(g_r) / stat_den(lambda_i g_i)`.
pub fn aggregated_weight(
    g_r: &GradientVector,
    g_conditions: &[GradientVector],
    lambdas: &[f64],
    stat: GradStatistic,
) -> Result<f64> {
    check_shapes(g_r, g_conditions, lambdas)?;
    let num = grad_stat(g_r.entries(), stat, StatPosition::Numerator)?;
    let mut total = 0.0;
    for (g, &lambda) in g_conditions.iter().zip(lambdas) {
        total += gradient_ratio(num, g, lambda, stat)?;
    }
    Ok(total)
}

/// Per-condition gradient ratios; `None` marks a condition whose
/// denominator was degenerate this step.
pub fn gw_weights(
    g_r: &GradientVector,
    g_conditions: &[GradientVector],
    lambdas: &[f64],
    stat: GradStatistic,
) -> Result<Vec<Option<f64>>> {
    check_shapes(g_r, g_conditions, lambdas)?;
    let num = match grad_stat(g_r.entries(), stat, StatPosition::Numerator) {
        Ok(v) => v,
        Err(Error::DegenerateStatistic(_)) => return Ok(vec![None; lambdas.len()]),
        Err(e) => return Err(e),
    };
    g_conditions
        .iter()
        .zip(lambdas)
        .map(|(g, &lambda)| match gradient_ratio(num, g, lambda, stat) {
            Ok(r) => Ok(Some(r)),
            Err(Error::DegenerateStatistic(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// `I_i = L_i / mu_i`. A zero running mean (condition fit exactly so far)
/// maps to the neutral index 1.
pub fn difficulty_index(losses: &[f64], mu: &[f64]) -> Vec<f64> {
    losses
        .iter()
        .zip(mu)
        .map(|(&l, &m)| if m == 0.0 { 1.0 } else { l / m })
        .collect()
}

/// `lambda_hat_i = I_i / sum_j I_j * G`. Falls back to an even split if
/// every index is zero.
pub fn allocate(difficulty: &[f64], aggregated: f64) -> Vec<f64> {
    let total: f64 = difficulty.iter().sum();
    if total == 0.0 {
        return allocate_avg(difficulty.len(), aggregated);
    }
    difficulty.iter().map(|&i| i / total * aggregated).collect()
}

/// `lambda_hat_i = G / M`.
pub fn allocate_avg(m: usize, aggregated: f64) -> Vec<f64> {
    vec![aggregated / m as f64; m]
}

/// Running mean: `(1 - 1/t) prev + (1/t) x`.
pub fn welford_update(prev: f64, x: f64, t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::usage("running-mean update needs t >= 1"));
    }
    let w = 1.0 / t as f64;
    Ok((1.0 - w) * prev + w * x)
}

/// Exponential moving average: `(1 - alpha) prev + alpha x`.
pub fn ema_update(prev: f64, x: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config("alpha", format!("{alpha} is outside (0, 1]")));
    }
    Ok((1.0 - alpha) * prev + alpha * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gv(v: &[f64]) -> GradientVector {
        GradientVector::from_vec(v.to_vec())
    }

    #[test]
    fn single_condition_ratio() {
        let g_r = gv(&[1.0, -3.0, 2.0]);
        let g1 = gv(&[0.5, 0.5, 0.5]);
        let g = aggregated_weight(&g_r, std::slice::from_ref(&g1), &[1.0], GradStatistic::Mean).unwrap();
        assert_eq!(g, 6.0);
        let w = gw_weights(&g_r, &[g1], &[1.0], GradStatistic::Mean).unwrap();
        assert_eq!(w, vec![Some(6.0)]);
    }

    #[test]
    fn symmetric_conditions() {
        let g_r = gv(&[1.0, -3.0, 2.0]);
        let g1 = gv(&[0.2, -0.4, 0.1]);
        let conds = [g1.clone(), g1.clone()];
        let single = aggregated_weight(&g_r, &conds[..1], &[1.0], GradStatistic::Mean).unwrap();
        let both = aggregated_weight(&g_r, &conds, &[1.0, 1.0], GradStatistic::Mean).unwrap();
        assert_eq!(both, 2.0 * single);
        let w = gw_weights(&g_r, &conds, &[1.0, 1.0], GradStatistic::Std).unwrap();
        assert_eq!(w[0], w[1]);
    }

    #[test]
    fn doubled_lambda_halves_term() {
        let g_r = gv(&[1.0, -3.0, 2.0]);
        let g1 = gv(&[0.2, -0.4, 0.1]);
        for stat in [GradStatistic::Mean, GradStatistic::Std] {
            let a = aggregated_weight(&g_r, std::slice::from_ref(&g1), &[1.0], stat).unwrap();
            let b = aggregated_weight(&g_r, std::slice::from_ref(&g1), &[2.0], stat).unwrap();
            assert!((b - a / 2.0).abs() <= 1e-15 * a);
        }
    }

    #[test]
    fn scaled_condition_gradient_scales_weight() {
        let g_r = gv(&[1.0, -3.0, 2.0]);
        let g1 = gv(&[0.2, -0.4, 0.1]);
        let g10 = gv(&[2.0, -4.0, 1.0]);
        let a = gw_weights(&g_r, &[g1], &[1.0], GradStatistic::Mean).unwrap()[0].unwrap();
        let b = gw_weights(&g_r, &[g10], &[1.0], GradStatistic::Mean).unwrap()[0].unwrap();
        assert!((b - a / 10.0).abs() < 1e-14 * a);
    }

    #[test]
    fn degenerate_denominator() {
        let g_r = gv(&[1.0, -3.0, 2.0]);
        let flat = gv(&[0.5, 0.5, 0.5]);
        let good = gv(&[0.1, 0.2, 0.4]);
        let conds = [flat, good];
        assert!(matches!(
            aggregated_weight(&g_r, &conds, &[1.0, 1.0], GradStatistic::Std),
            Err(Error::DegenerateStatistic(_))
        ));
        let w = gw_weights(&g_r, &conds, &[1.0, 1.0], GradStatistic::Std).unwrap();
        assert!(w[0].is_none() && w[1].is_some());
        // zero weight makes the mean-kind denominator vanish
        assert!(aggregated_weight(&g_r, &conds[1..], &[0.0], GradStatistic::Mean).is_err());
    }

    #[test]
    fn difficulty_examples() {
        assert_eq!(difficulty_index(&[3.0, 5.0], &[3.0, 5.0]), vec![1.0, 1.0]);
        assert_eq!(difficulty_index(&[4.0, 1.0], &[2.0, 2.0]), vec![2.0, 0.5]);
        assert_eq!(difficulty_index(&[0.0, 1.0], &[0.0, 2.0]), vec![1.0, 0.5]);
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate(&[1.0, 1.0], 10.0), vec![5.0, 5.0]);
        assert_eq!(allocate(&[3.0, 1.0], 8.0), vec![6.0, 2.0]);
        assert_eq!(allocate_avg(2, 10.0), vec![5.0, 5.0]);
        assert_eq!(allocate_avg(3, 6.0), vec![2.0, 2.0, 2.0]);
        assert_eq!(allocate(&[0.7, 0.7, 0.7], 6.0), allocate_avg(3, 6.0));
        assert_eq!(allocate(&[0.0, 0.0], 4.0), vec![2.0, 2.0]);
    }

    #[test]
    fn welford_examples() {
        assert_eq!(welford_update(123.0, 7.5, 1).unwrap(), 7.5);
        let mut m = 0.0;
        for (t, x) in [2.0, 4.0, 6.0].into_iter().enumerate() {
            m = welford_update(m, x, t as u64 + 1).unwrap();
        }
        assert_eq!(m, 4.0);
        assert!(matches!(welford_update(1.0, 1.0, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema_update(2.0, 4.0, 1.0).unwrap(), 4.0);
        assert_eq!(ema_update(2.0, 4.0, 0.5).unwrap(), 3.0);
        assert!(ema_update(2.0, 4.0, 0.0).is_err());
        assert!(ema_update(2.0, 4.0, 1.5).is_err());
        // closed-form convergence to a constant input
        let (alpha, x, l0) = (0.2, 3.0, 10.0);
        let mut l = l0;
        for t in 1..=50 {
            l = ema_update(l, x, alpha).unwrap();
            let expect = (1.0f64 - alpha).powi(t) * (l0 - x);
            assert!(((l - x) - expect).abs() < 1e-12);
        }
    }
}
