use std::fmt;
use std::str::FromStr;

use super::{
    aggregated_weight, allocate, allocate_avg, difficulty_index, ema_update, gw_weights, welford_update,
    GradStatistic,
};
use crate::autodiff::GradientVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Equal,
    Gw,
    Db,
    DbAvg,
    DbNoBalance,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Equal,
        Strategy::Gw,
        Strategy::Db,
        Strategy::DbAvg,
        Strategy::DbNoBalance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Equal => "equal",
            Strategy::Gw => "gw",
            Strategy::Db => "db",
            Strategy::DbAvg => "db_avg",
            Strategy::DbNoBalance => "db_no_balance",
        }
    }

    /// The update rule a strategy uses when none is configured.
    pub fn default_rule(self) -> UpdateRule {
        match self {
            Strategy::Gw => UpdateRule::Ema(0.1),
            _ => UpdateRule::Welford,
        }
    }

    pub fn uses_statistic(self) -> bool {
        self != Strategy::Equal
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy '{s}' (expected equal, gw, db, db_avg or db_no_balance)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    /// running arithmetic mean of the instantaneous weights
    Welford,
    /// exponential moving average with the given alpha
    Ema(f64),
}

impl UpdateRule {
    fn apply(self, prev: f64, x: f64, t: u64) -> Result<f64> {
        match self {
            UpdateRule::Welford => welford_update(prev, x, t),
            UpdateRule::Ema(alpha) => ema_update(prev, x, alpha),
        }
    }
}

/// Condition-fitting losses of one step plus the residual loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector {
    pub residual: f64,
    pub conditions: Vec<f64>,
}

/// What happened during one balancer step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    /// Aggregated weight `G` (sum of gradient ratios), when computed.
    pub aggregated: Option<f64>,
    /// Instantaneous weights; `None` entries were skipped this step.
    pub instantaneous: Vec<Option<f64>>,
    /// True when degenerate statistics left every weight unchanged.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancerState {
    pub strategy: Strategy,
    pub statistic: GradStatistic,
    pub update_rule: UpdateRule,
    pub lambdas: Vec<f64>,
    pub mu_loss: Vec<f64>,
    pub difficulty: Vec<f64>,
    pub t: u64,
    seeded: bool,
}

impl BalancerState {
    /// Weights and difficulty indexes start at 1; the running loss mean is
    /// seeded from the first observed loss vector.
    pub fn new(strategy: Strategy, statistic: GradStatistic, update_rule: UpdateRule, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::usage("balancer needs at least one condition"));
        }
        if let UpdateRule::Ema(alpha) = update_rule {
            ema_update(0.0, 0.0, alpha)?;
            if strategy == Strategy::DbNoBalance {
                return Err(Error::config(
                    "update_rule",
                    "db_no_balance is defined with the running-mean rule",
                ));
            }
        }
        Ok(Self {
            strategy,
            statistic,
            update_rule,
            lambdas: vec![1.0; m],
            mu_loss: vec![0.0; m],
            difficulty: vec![1.0; m],
            t: 0,
            seeded: false,
        })
    }

    pub fn condition_count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn seed_loss_mean(&mut self, initial: &[f64]) {
        self.mu_loss.copy_from_slice(initial);
        self.seeded = true;
    }

    /// Advances the state by one weighting step.
    pub fn step(
        &mut self,
        losses: &LossVector,
        g_r: &GradientVector,
        g_conditions: &[GradientVector],
    ) -> Result<StepReport> {
        let m = self.condition_count();
        if losses.conditions.len() != m || g_conditions.len() != m {
            return Err(Error::usage(format!(
                "balancer has {m} conditions, got {} losses and {} gradients",
                losses.conditions.len(),
                g_conditions.len()
            )));
        }
        if let Some(l) = losses.conditions.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::overflow(format!("condition loss {l}")));
        }
        if !self.seeded {
            self.seed_loss_mean(&losses.conditions);
        }
        self.t += 1;
        let t = self.t;

        match self.strategy {
            Strategy::Equal => Ok(StepReport {
                aggregated: None,
                instantaneous: vec![Some(1.0); m],
                skipped: false,
            }),
            Strategy::Gw | Strategy::DbNoBalance => {
                let hats = gw_weights(g_r, g_conditions, &self.lambdas, self.statistic)?;
                let mut new = self.lambdas.clone();
                for (lambda, hat) in new.iter_mut().zip(&hats) {
                    if let Some(h) = *hat {
                        *lambda = self.checked(self.update_rule.apply(*lambda, h, t)?)?;
                    }
                }
                self.track_difficulty(&losses.conditions)?;
                self.lambdas = new;
                let skipped = hats.iter().all(Option::is_none);
                let aggregated = (!skipped).then(|| hats.iter().flatten().sum());
                Ok(StepReport {
                    aggregated,
                    instantaneous: hats,
                    skipped,
                })
            }
            Strategy::Db | Strategy::DbAvg => {
                let g = match aggregated_weight(g_r, g_conditions, &self.lambdas, self.statistic) {
                    Ok(g) => g,
                    Err(Error::DegenerateStatistic(_)) => {
                        return Ok(StepReport {
                            aggregated: None,
                            instantaneous: vec![None; m],
                            skipped: true,
                        })
                    }
                    Err(e) => return Err(e),
                };
                self.track_difficulty(&losses.conditions)?;
                let hats = if self.strategy == Strategy::Db {
                    allocate(&self.difficulty, g)
                } else {
                    allocate_avg(m, g)
                };
                let mut new = Vec::with_capacity(m);
                for (&lambda, &h) in self.lambdas.iter().zip(&hats) {
                    new.push(self.checked(self.update_rule.apply(lambda, self.checked(h)?, t)?)?);
                }
                self.lambdas = new;
                Ok(StepReport {
                    aggregated: Some(g),
                    instantaneous: hats.into_iter().map(Some).collect(),
                    skipped: false,
                })
            }
        }
    }

    /// Running loss mean, then difficulty indexes against it.
    fn track_difficulty(&mut self, losses: &[f64]) -> Result<()> {
        for (mu, &l) in self.mu_loss.iter_mut().zip(losses) {
            *mu = welford_update(*mu, l, self.t)?;
        }
        self.difficulty = difficulty_index(losses, &self.mu_loss);
        Ok(())
    }

    fn checked(&self, v: f64) -> Result<f64> {
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(Error::overflow(format!(
                "{} weight at step {} became {v}",
                self.strategy, self.t
            )))
        }
    }
}
