use crate::autodiff::{
    eval_with_input_derivs, forward_jets, DualScalar, GradientVector, JetModel, JetSpec, Jets, TapedNetwork,
};
use crate::error::{Error, Result};
use crate::nn::NetworkParams;

use super::{ConditionChannel, ConditionSpec, PdeProblem, Point};

fn residual_spec() -> JetSpec {
    JetSpec::new(vec![0, 1], 2)
}

fn flatten(points: &[Point]) -> &[f64] {
    points.as_flattened()
}

fn condition<'a>(problem: &'a PdeProblem, index: usize) -> Result<&'a ConditionSpec> {
    problem.conditions.get(index).ok_or_else(|| {
        Error::usage(format!(
            "condition index {index} out of range for {} ({} conditions)",
            problem.name(),
            problem.condition_count()
        ))
    })
}

fn nonempty(points: &[Point], what: &str) -> Result<()> {
    if points.is_empty() {
        Err(Error::config(what, "point set is empty"))
    } else {
        Ok(())
    }
}

/// Per-point residuals `N[u] - f` from a model's jets.
fn residuals(problem: &PdeProblem, points: &[Point], jets: &Jets) -> Result<Vec<f64>> {
    let kind = problem.kind;
    let (u, uxx, uyy) = (jets.value(), jets.d2(0), jets.d2(1));
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let r = kind.residual(u[i], [uxx[i], uyy[i]], problem.forcing(p));
            if r.is_finite() {
                Ok(r)
            } else {
                Err(Error::overflow(format!(
                    "{} residual at ({}, {})",
                    problem.name(),
                    p[0],
                    p[1]
                )))
            }
        })
        .collect()
}

/// Mean squared PDE residual over `points`.
pub fn residual_loss<M: JetModel>(model: &M, problem: &PdeProblem, points: &[Point]) -> Result<f64> {
    nonempty(points, "n_residual")?;
    let jets = model.jets(flatten(points), &residual_spec())?;
    let r = residuals(problem, points, &jets)?;
    Ok(r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64)
}

/// Residual loss and its parameter gradient through the batched engine.
pub fn residual_loss_grad(
    net: &NetworkParams,
    problem: &PdeProblem,
    points: &[Point],
) -> Result<(f64, GradientVector)> {
    nonempty(points, "n_residual")?;
    let spec = residual_spec();
    let trace = forward_jets(net, flatten(points), &spec)?;
    let jets = trace.output();
    let r = residuals(problem, points, jets)?;
    let n = r.len();
    let scale = 2.0 / n as f64;
    let mut seed = Jets::zeros(n, spec.clone());
    let (cu, cxx, cyy) = (spec.channel(0, 0), spec.channel(0, 2), spec.channel(1, 2));
    for (i, &ri) in r.iter().enumerate() {
        let (du, dd2) = problem.kind.residual_partials(jets.value()[i]);
        let g = scale * ri;
        seed.channel_mut(cu)[i] = g * du;
        seed.channel_mut(cxx)[i] = g * dd2[0];
        seed.channel_mut(cyy)[i] = g * dd2[1];
    }
    let loss = r.iter().map(|v| v * v).sum::<f64>() / n as f64;
    Ok((loss, trace.backward(&seed)?))
}

/// Per-channel mismatches `(prediction - target)` for every point.
fn mismatches<'a>(
    cond: &'a ConditionSpec,
    points: &'a [Point],
    jets: &'a Jets,
) -> impl Iterator<Item = (usize, Vec<f64>)> + 'a {
    let spec = jets.spec();
    cond.channels.iter().map(move |ch| {
        let (c, target) = match *ch {
            ConditionChannel::Value(t) => (0, t),
            ConditionChannel::Derivative { axis, target } => {
                (spec.channel(spec.position(axis).expect("axis in spec"), 1), target)
            }
        };
        let pred = jets.channel(c);
        let diff = points.iter().zip(pred).map(|(&p, &v)| v - target(p)).collect();
        (c, diff)
    })
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|d| d * d).sum::<f64>() / v.len() as f64
}

/// Mean squared mismatch of condition `index` over `points`, summed over
/// the condition's channels.
pub fn condition_loss<M: JetModel>(
    model: &M,
    problem: &PdeProblem,
    index: usize,
    points: &[Point],
) -> Result<f64> {
    let cond = condition(problem, index)?;
    nonempty(points, &cond.label)?;
    let jets = model.jets(flatten(points), &cond.jet_spec())?;
    let loss = mismatches(cond, points, &jets).map(|(_, d)| mean_square(&d)).sum::<f64>();
    finite(loss, &cond.label)
}

fn finite(loss: f64, label: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::overflow(format!("condition loss '{label}'")))
    }
}

pub fn condition_loss_grad(
    net: &NetworkParams,
    problem: &PdeProblem,
    index: usize,
    points: &[Point],
) -> Result<(f64, GradientVector)> {
    let cond = condition(problem, index)?;
    nonempty(points, &cond.label)?;
    let spec = cond.jet_spec();
    let trace = forward_jets(net, flatten(points), &spec)?;
    let n = points.len();
    let mut seed = Jets::zeros(n, spec);
    let mut loss = 0.0;
    for (c, diff) in mismatches(cond, points, trace.output()) {
        loss += mean_square(&diff);
        let scale = 2.0 / n as f64;
        for (s, d) in seed.channel_mut(c).iter_mut().zip(&diff) {
            *s += scale * d;
        }
    }
    let loss = finite(loss, &cond.label)?;
    Ok((loss, trace.backward(&seed)?))
}

/// Residual loss recorded on the scalar tape: two jet evaluations per point
/// (one per axis) feeding one tape.
pub fn residual_loss_on_tape<'t>(
    net: &TapedNetwork<'t, '_>,
    problem: &PdeProblem,
    points: &[Point],
) -> Result<DualScalar<'t>> {
    nonempty(points, "n_residual")?;
    let tape = net.tape();
    let mut acc = tape.constant(0.0);
    for &p in points {
        let along_x = eval_with_input_derivs(net, &p, 0, 2)?;
        let along_y = eval_with_input_derivs(net, &p, 1, 2)?;
        let u = along_x.truncate(0);
        let r = problem.kind.residual(
            u,
            [along_x.d2_as_value(), along_y.d2_as_value()],
            problem.forcing(p),
        );
        if !r.value.is_finite() {
            return Err(Error::overflow(format!("tape residual at ({}, {})", p[0], p[1])));
        }
        acc = acc + r * r;
    }
    Ok(acc * (1.0 / points.len() as f64))
}

pub fn condition_loss_on_tape<'t>(
    net: &TapedNetwork<'t, '_>,
    problem: &PdeProblem,
    index: usize,
    points: &[Point],
) -> Result<DualScalar<'t>> {
    let cond = condition(problem, index)?;
    nonempty(points, &cond.label)?;
    let tape = net.tape();
    let mut acc = tape.constant(0.0);
    for ch in &cond.channels {
        let mut sum = tape.constant(0.0);
        for &p in points {
            let d = match *ch {
                ConditionChannel::Value(t) => eval_with_input_derivs(net, &p, 0, 0)? - t(p),
                ConditionChannel::Derivative { axis, target } => {
                    eval_with_input_derivs(net, &p, axis, 1)?.d1_as_value() - target(p)
                }
            };
            sum = sum + d * d;
        }
        acc = acc + sum * (1.0 / points.len() as f64);
    }
    Ok(acc)
}
