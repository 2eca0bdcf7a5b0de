//! Benchmark PDEs: residual operators, condition groups, samplers and losses.

mod loss;
mod problems;
mod sampling;

pub use loss::{
    condition_loss, condition_loss_grad, condition_loss_on_tape, residual_loss, residual_loss_grad,
    residual_loss_on_tape,
};
pub use problems::{Field, ProblemKind};
pub use sampling::{sample_batch, SampleBatch, SampleCounts};

use crate::autodiff::{JetModel, JetSpec, Jets};
use crate::error::{Error, Result};

pub type Point = [f64; 2];
pub type TargetFn = fn(Point) -> f64;

/// What a condition constrains at its points.
#[derive(Debug, Clone, Copy)]
pub enum ConditionChannel {
    /// `u(p) = target(p)`
    Value(TargetFn),
    /// `du/d axis (p) = target(p)`
    Derivative { axis: usize, target: TargetFn },
}

/// Points where one coordinate is pinned to one of `levels` and the other
/// ranges over the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub fixed_axis: usize,
    pub levels: Vec<f64>,
}

impl Manifold {
    pub fn contains(&self, p: Point) -> bool {
        self.levels.contains(&p[self.fixed_axis])
    }
}

#[derive(Debug, Clone)]
pub struct ConditionSpec {
    pub label: String,
    pub manifold: Manifold,
    /// Loss is the sum of per-channel mean squared mismatches.
    pub channels: Vec<ConditionChannel>,
}

impl ConditionSpec {
    /// Jet channels needed to evaluate this condition.
    pub fn jet_spec(&self) -> JetSpec {
        let mut dirs: Vec<usize> = self
            .channels
            .iter()
            .filter_map(|c| match c {
                ConditionChannel::Derivative { axis, .. } => Some(*axis),
                ConditionChannel::Value(_) => None,
            })
            .collect();
        dirs.dedup();
        if dirs.is_empty() {
            JetSpec::value_only()
        } else {
            JetSpec::new(dirs, 1)
        }
    }

    pub fn constrains_derivative(&self) -> bool {
        self.channels
            .iter()
            .any(|c| matches!(c, ConditionChannel::Derivative { .. }))
    }
}

#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub kind: ProblemKind,
    pub conditions: Vec<ConditionSpec>,
}

fn zero(_: Point) -> f64 {
    0.0
}

fn kg_boundary(p: Point) -> f64 {
    ProblemKind::KleinGordon.exact(p)
}

fn kg_initial(p: Point) -> f64 {
    p[0]
}

fn wave_initial(p: Point) -> f64 {
    use std::f64::consts::PI;
    (PI * p[0]).sin() + 0.5 * (4.0 * PI * p[0]).sin()
}

fn initial_conditions(value: TargetFn) -> [ConditionSpec; 2] {
    let slice = Manifold {
        fixed_axis: 1,
        levels: vec![0.0],
    };
    [
        ConditionSpec {
            label: "ic_u".into(),
            manifold: slice.clone(),
            channels: vec![ConditionChannel::Value(value)],
        },
        ConditionSpec {
            label: "ic_ut".into(),
            manifold: slice,
            channels: vec![ConditionChannel::Derivative { axis: 1, target: zero }],
        },
    ]
}

/// `u_tt - u_xx + u^3 = f` on [0,1]^2 with manufactured forcing; conditions
/// `bc`, `ic_u`, `ic_ut`.
pub fn make_klein_gordon() -> PdeProblem {
    let [ic_u, ic_ut] = initial_conditions(kg_initial);
    PdeProblem {
        kind: ProblemKind::KleinGordon,
        conditions: vec![
            ConditionSpec {
                label: "bc".into(),
                manifold: Manifold {
                    fixed_axis: 0,
                    levels: vec![0.0, 1.0],
                },
                channels: vec![ConditionChannel::Value(kg_boundary)],
            },
            ic_u,
            ic_ut,
        ],
    }
}

/// `u_tt - 4 u_xx = 0` on [0,1]^2; conditions `bc`, `ic_u`, `ic_ut`.
pub fn make_wave() -> PdeProblem {
    let [ic_u, ic_ut] = initial_conditions(wave_initial);
    PdeProblem {
        kind: ProblemKind::Wave,
        conditions: vec![
            ConditionSpec {
                label: "bc".into(),
                manifold: Manifold {
                    fixed_axis: 0,
                    levels: vec![0.0, 1.0],
                },
                channels: vec![ConditionChannel::Value(zero)],
            },
            ic_u,
            ic_ut,
        ],
    }
}

/// `u_xx + u_yy + u = q` on [-1,1]^2 with the boundary split into the
/// `x = +-1` group and the `y = +-1` group.
pub fn make_helmholtz() -> PdeProblem {
    let group = |label: &str, axis: usize| ConditionSpec {
        label: label.into(),
        manifold: Manifold {
            fixed_axis: axis,
            levels: vec![-1.0, 1.0],
        },
        channels: vec![ConditionChannel::Value(zero)],
    };
    PdeProblem {
        kind: ProblemKind::Helmholtz,
        conditions: vec![group("bc_x", 0), group("bc_y", 1)],
    }
}

impl PdeProblem {
    pub fn by_name(name: &str) -> Result<Self> {
        match ProblemKind::from_name(name) {
            Some(ProblemKind::KleinGordon) => Ok(make_klein_gordon()),
            Some(ProblemKind::Wave) => Ok(make_wave()),
            Some(ProblemKind::Helmholtz) => Ok(make_helmholtz()),
            None => Err(Error::config(
                "problem",
                format!("unknown problem '{name}' (expected klein-gordon, wave or helmholtz)"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn bounds(&self) -> [(f64, f64); 2] {
        self.kind.bounds()
    }

    pub fn axis_names(&self) -> [&'static str; 2] {
        self.kind.axis_names()
    }

    pub fn condition_count(&self) -> usize {
        self.conditions.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.conditions.iter().map(|c| c.label.as_str()).collect()
    }

    /// Folds `ic_u` and `ic_ut` into a single `ic` condition (one weight).
    pub fn with_merged_ic(mut self) -> Self {
        let Some(iu) = self.conditions.iter().position(|c| c.label == "ic_u") else {
            return self;
        };
        let Some(it) = self.conditions.iter().position(|c| c.label == "ic_ut") else {
            return self;
        };
        let ut = self.conditions.remove(it);
        let ic = &mut self.conditions[if it < iu { iu - 1 } else { iu }];
        ic.label = "ic".into();
        ic.channels.extend(ut.channels);
        self
    }

    pub fn forcing(&self, p: Point) -> f64 {
        self.kind.forcing(p)
    }

    pub fn exact(&self, p: Point) -> f64 {
        self.kind.exact(p)
    }

    pub fn exact_solution(&self) -> ExactSolution {
        ExactSolution(self.kind)
    }

    pub fn in_domain(&self, p: Point) -> bool {
        self.bounds()
            .iter()
            .zip(p)
            .all(|(&(lo, hi), v)| (lo..=hi).contains(&v))
    }
}

/// The closed-form solution of a benchmark, usable wherever a network is.
#[derive(Debug, Clone, Copy)]
pub struct ExactSolution(pub ProblemKind);

impl JetModel for ExactSolution {
    fn input_dim(&self) -> usize {
        2
    }

    fn jets(&self, points: &[f64], spec: &JetSpec) -> Result<Jets> {
        let n = points.len() / 2;
        let mut jets = Jets::zeros(n, spec.clone());
        for (i, p) in points.chunks_exact(2).enumerate() {
            let p = [p[0], p[1]];
            jets.channel_mut(0)[i] = self.0.exact(p);
            for (k, &axis) in spec.dirs.iter().enumerate() {
                let j = self.0.exact_jet(p, axis);
                for ord in 1..=spec.order {
                    jets.channel_mut(spec.channel(k, ord))[i] = j[ord as usize];
                }
            }
        }
        Ok(jets)
    }
}

/// The identically-zero function.
#[derive(Debug, Clone, Copy)]
pub struct ZeroModel;

impl JetModel for ZeroModel {
    fn input_dim(&self) -> usize {
        2
    }

    fn jets(&self, points: &[f64], spec: &JetSpec) -> Result<Jets> {
        Ok(Jets::zeros(points.len() / 2, spec.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_counts() {
        assert_eq!(make_klein_gordon().condition_count(), 3);
        assert_eq!(make_wave().condition_count(), 3);
        assert_eq!(make_helmholtz().condition_count(), 2);
        assert_eq!(make_wave().labels(), ["bc", "ic_u", "ic_ut"]);
        assert_eq!(make_helmholtz().labels(), ["bc_x", "bc_y"]);
    }

    #[test]
    fn merged_ic() {
        let p = make_wave().with_merged_ic();
        assert_eq!(p.labels(), ["bc", "ic"]);
        assert_eq!(p.conditions[1].channels.len(), 2);
        assert_eq!(p.conditions[1].jet_spec(), JetSpec::new(vec![1], 1));
        // no initial conditions to merge
        assert_eq!(make_helmholtz().with_merged_ic().labels(), ["bc_x", "bc_y"]);
    }

    #[test]
    fn unknown_problem_is_config_error() {
        assert!(matches!(PdeProblem::by_name("burgers"), Err(Error::Config { .. })));
        assert_eq!(PdeProblem::by_name("wave").unwrap().name(), "wave");
    }

    #[test]
    fn boundary_targets_agree_with_exact_solution() {
        for problem in [make_klein_gordon(), make_wave(), make_helmholtz()] {
            for c in &problem.conditions {
                for level in &c.manifold.levels {
                    for s in [0.0, 0.25, 0.5, 0.9] {
                        let mut p = [0.0; 2];
                        let free = 1 - c.manifold.fixed_axis;
                        let (lo, hi) = problem.bounds()[free];
                        p[c.manifold.fixed_axis] = *level;
                        p[free] = lo + s * (hi - lo);
                        for ch in &c.channels {
                            let (got, want) = match ch {
                                ConditionChannel::Value(t) => (problem.exact(p), t(p)),
                                ConditionChannel::Derivative { axis, target } => {
                                    (problem.kind.exact_jet(p, *axis)[1], target(p))
                                }
                            };
                            assert!((got - want).abs() < 1e-12, "{} {:?}", c.label, p);
                        }
                    }
                }
            }
        }
    }
}
