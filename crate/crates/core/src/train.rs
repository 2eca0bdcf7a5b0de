//! The training loop: losses and per-loss gradients, a weighting step, and
//! an Adam update on the weighted gradient sum, every step.

use std::fmt;
use std::time::Instant;

use crate::autodiff::GradientVector;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_on, EvalGrid};
use crate::nn::{adam_step, init_network, AdamState, NetworkParams};
use crate::pde::{
    condition_loss_grad, residual_loss_grad, sample_batch, PdeProblem, SampleBatch, SampleCounts,
};
use crate::weighting::{BalancerState, GradStatistic, LossVector, Strategy, UpdateRule};

/// A weighting method: strategy, gradient statistic and update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Method {
    pub strategy: Strategy,
    pub statistic: GradStatistic,
    pub update_rule: UpdateRule,
}

impl Method {
    pub fn new(strategy: Strategy, statistic: GradStatistic) -> Self {
        Self {
            strategy,
            statistic,
            update_rule: strategy.default_rule(),
        }
    }

    pub fn with_rule(mut self, rule: UpdateRule) -> Self {
        self.update_rule = rule;
        self
    }

    /// Short identifier such as `equal`, `db-std`, `gw-kurtosis` or
    /// `db-mean-ema0.5`. The rule is only spelled out when it differs from
    /// the strategy's default.
    pub fn label(&self) -> String {
        if self.strategy == Strategy::Equal {
            return "equal".into();
        }
        let mut s = format!("{}-{}", self.strategy, self.statistic);
        if self.update_rule != self.strategy.default_rule() {
            match self.update_rule {
                UpdateRule::Welford => s.push_str("-welford"),
                UpdateRule::Ema(a) => s.push_str(&format!("-ema{a}")),
            }
        }
        s
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub problem: String,
    /// Fold `ic_u` and `ic_ut` into one condition with a single weight.
    pub merge_ic: bool,
    pub layer_sizes: Vec<usize>,
    pub n_residual: usize,
    pub n_condition: usize,
    pub max_train_steps: u64,
    pub learning_rate: f64,
    pub method: Method,
    pub weight_update_stride: u64,
    pub seed: u64,
    pub eval_resolution: usize,
    pub log_stride: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            problem: "wave".into(),
            merge_ic: false,
            layer_sizes: vec![2, 30, 30, 30, 1],
            n_residual: 2000,
            n_condition: 200,
            max_train_steps: 20_000,
            learning_rate: 1e-3,
            method: Method::new(Strategy::Db, GradStatistic::Mean),
            weight_update_stride: 1,
            seed: 0,
            eval_resolution: 101,
            log_stride: 500,
        }
    }
}

impl TrainConfig {
    pub fn build_problem(&self) -> Result<PdeProblem> {
        let p = PdeProblem::by_name(&self.problem)?;
        Ok(if self.merge_ic { p.with_merged_ic() } else { p })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: u64| {
            if v == 0 {
                Err(Error::config(key, "must be positive"))
            } else {
                Ok(())
            }
        };
        self.build_problem()?;
        crate::nn::param_count(&self.layer_sizes)?;
        if self.layer_sizes[0] != 2 {
            return Err(Error::config("layer_sizes", "input size must be 2"));
        }
        positive("n_residual", self.n_residual as u64)?;
        positive("n_condition", self.n_condition as u64)?;
        positive("max_train_steps", self.max_train_steps)?;
        positive("weight_update_stride", self.weight_update_stride)?;
        positive("log_stride", self.log_stride)?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        if self.eval_resolution < 2 {
            return Err(Error::config("eval_resolution", "must be at least 2"));
        }
        BalancerState::new(self.method.strategy, self.method.statistic, self.method.update_rule, 1)?;
        Ok(())
    }
}

/// One logged step. Losses are measured before the step's update; weights
/// after its weighting step; metrics after its parameter update.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub residual_loss: f64,
    pub condition_losses: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub aggregated: Option<f64>,
    pub l2re: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted { step: u64, diagnostic: String },
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub condition_labels: Vec<String>,
    pub history: Vec<LogRow>,
    pub status: RunStatus,
    /// Last parameters known to be finite.
    pub params: NetworkParams,
    pub steps_completed: u64,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// `(l2re, mae)` of the final logged row.
    pub fn final_metrics(&self) -> Option<(f64, f64)> {
        self.history.last().map(|r| (r.l2re, r.mae))
    }
}

/// `g_r + sum_i lambda_i g_i`
pub fn combined_gradient(
    g_r: &GradientVector,
    g_conditions: &[GradientVector],
    lambdas: &[f64],
) -> Result<GradientVector> {
    if g_conditions.len() != lambdas.len() {
        return Err(Error::usage(format!(
            "{} condition gradients but {} weights",
            g_conditions.len(),
            lambdas.len()
        )));
    }
    let mut total = g_r.clone();
    for (g, &lambda) in g_conditions.iter().zip(lambdas) {
        total.add_scaled(lambda, g)?;
    }
    Ok(total)
}

/// Losses and gradients of one step.
pub struct StepGradients {
    pub losses: LossVector,
    pub g_residual: GradientVector,
    pub g_conditions: Vec<GradientVector>,
}

pub fn step_gradients(net: &NetworkParams, problem: &PdeProblem, batch: &SampleBatch) -> Result<StepGradients> {
    let (residual, g_residual) = residual_loss_grad(net, problem, &batch.collocation)?;
    let mut conditions = Vec::with_capacity(problem.condition_count());
    let mut g_conditions = Vec::with_capacity(problem.condition_count());
    for (i, pts) in batch.conditions.iter().enumerate() {
        let (l, g) = condition_loss_grad(net, problem, i, pts)?;
        conditions.push(l);
        g_conditions.push(g);
    }
    Ok(StepGradients {
        losses: LossVector { residual, conditions },
        g_residual,
        g_conditions,
    })
}

struct Trainer {
    problem: PdeProblem,
    batch: SampleBatch,
    grid: EvalGrid,
    net: NetworkParams,
    adam: AdamState,
    balancer: BalancerState,
    aggregated: Option<f64>,
}

impl Trainer {
    fn one_step(&mut self, config: &TrainConfig, t: u64) -> Result<Option<LogRow>> {
        let sg = step_gradients(&self.net, &self.problem, &self.batch)?;
        if (t - 1) % config.weight_update_stride == 0 {
            let report = self.balancer.step(&sg.losses, &sg.g_residual, &sg.g_conditions)?;
            if report.aggregated.is_some() {
                self.aggregated = report.aggregated;
            }
        }
        let g = combined_gradient(&sg.g_residual, &sg.g_conditions, &self.balancer.lambdas)?;
        let mut next = self.net.clone();
        adam_step(&mut next, &g, &mut self.adam)?;
        if let Some(i) = next.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::overflow(format!("parameter {i} after the update")));
        }
        self.net = next;

        let log = t == 1 || t % config.log_stride == 0 || t == config.max_train_steps;
        if !log {
            return Ok(None);
        }
        let eval = evaluate_on(&self.net, &self.grid)?;
        Ok(Some(LogRow {
            step: t,
            residual_loss: sg.losses.residual,
            condition_losses: sg.losses.conditions,
            lambdas: self.balancer.lambdas.clone(),
            aggregated: self.aggregated,
            l2re: eval.l2re,
            mae: eval.mae,
        }))
    }
}

/// Runs one seeded training run. Configuration problems are errors; numeric
/// failures during training end the run early with
/// [`RunStatus::Aborted`] and the history logged so far.
pub fn train(config: &TrainConfig) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();
    let problem = config.build_problem()?;
    let m = problem.condition_count();
    let counts = SampleCounts::uniform(config.n_residual, config.n_condition, m);
    let batch = sample_batch(&problem, &counts, config.seed)?;
    let grid = EvalGrid::new(&problem, config.eval_resolution)?;
    let net = init_network(&config.layer_sizes, config.seed)?;
    let method = config.method;
    let condition_labels = problem.labels().iter().map(|s| s.to_string()).collect();
    let mut trainer = Trainer {
        adam: AdamState::new(net.total_count(), config.learning_rate),
        balancer: BalancerState::new(method.strategy, method.statistic, method.update_rule, m)?,
        problem,
        batch,
        grid,
        net,
        aggregated: None,
    };
    let mut history = Vec::new();
    let mut status = RunStatus::Completed;
    let mut steps_completed = 0;
    for t in 1..=config.max_train_steps {
        match trainer.one_step(config, t) {
            Ok(row) => {
                steps_completed = t;
                history.extend(row);
            }
            Err(e @ (Error::NumericOverflow { .. } | Error::DegenerateReference | Error::DegenerateStatistic(_))) => {
                status = RunStatus::Aborted {
                    step: t,
                    diagnostic: format!("step {t}: {e}"),
                };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunRecord {
        config: config.clone(),
        condition_labels,
        history,
        status,
        params: trainer.net,
        steps_completed,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
