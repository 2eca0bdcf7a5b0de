use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{Method, TrainConfig};
use crate::weighting::{GradStatistic, Strategy, UpdateRule};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "DBPINN_OUTPUT_DIR";

/// A sweep of weighting methods over seeds, all sharing one training
/// template.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Everything but `method` and `seed`, which come from the sweep.
    pub template: TrainConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl ExperimentConfig {
    /// Runs in output order: methods outermost, then seeds.
    pub fn run_configs(&self) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.methods.len() * self.seeds.len());
        for &method in &self.methods {
            for &seed in &self.seeds {
                out.push(TrainConfig {
                    method,
                    seed,
                    ..self.template.clone()
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("method", "no weighting method given"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "the seed set is empty"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, m) in self.methods.iter().enumerate() {
            if !seen.insert(m.label()) {
                return Err(Error::config(format!("method[{i}]"), format!("duplicate method '{}'", m.label())));
            }
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::config("seeds", "duplicate seed"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            TrainConfig {
                method: *m,
                ..self.template.clone()
            }
            .validate()
            .map_err(|e| match e {
                Error::Config { key, message } if key == "update_rule" || key == "alpha" => {
                    Error::config(format!("method[{i}].{key}"), message)
                }
                e => e,
            })?;
        }
        Ok(())
    }

    /// Normalized TOML with every default spelled out; parsing it back yields
    /// an identical config.
    pub fn to_toml(&self) -> String {
        let t = &self.template;
        let raw = NormalizedConfig {
            problem: t.problem.clone(),
            merge_ic: t.merge_ic,
            layer_sizes: t.layer_sizes.clone(),
            n_residual: t.n_residual,
            n_condition: t.n_condition,
            max_train_steps: t.max_train_steps,
            learning_rate: t.learning_rate,
            weight_update_stride: t.weight_update_stride,
            eval_resolution: t.eval_resolution,
            log_stride: t.log_stride,
            seeds: self.seeds.clone(),
            output_dir: self.output_dir.to_string_lossy().into_owned(),
            workers: self.workers,
            method: self.methods.iter().map(RawMethod::from_method).collect(),
        };
        toml::to_string(&raw).expect("config serializes to TOML")
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    #[serde(skip_serializing_if = "Option::is_none")]
    strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    statistic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    update_rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

impl RawMethod {
    fn from_method(m: &Method) -> Self {
        let (rule, alpha) = match m.update_rule {
            UpdateRule::Welford => ("welford", None),
            UpdateRule::Ema(a) => ("ema", Some(a)),
        };
        Self {
            strategy: Some(m.strategy.name().into()),
            statistic: Some(m.statistic.name().into()),
            update_rule: Some(rule.into()),
            alpha,
        }
    }

    fn is_empty(&self) -> bool {
        self.strategy.is_none() && self.statistic.is_none() && self.update_rule.is_none() && self.alpha.is_none()
    }

    fn resolve(&self, prefix: &str) -> Result<Method> {
        let key = |k: &str| format!("{prefix}{k}");
        let strategy: Strategy = self
            .strategy
            .as_deref()
            .ok_or_else(|| Error::config(key("strategy"), "missing"))?
            .parse()
            .map_err(|m| Error::config(key("strategy"), m))?;
        let statistic: GradStatistic = match &self.statistic {
            Some(s) => s.parse().map_err(|m| Error::config(key("statistic"), m))?,
            None => GradStatistic::Mean,
        };
        let rule = match (self.update_rule.as_deref(), self.alpha) {
            (None, None) => strategy.default_rule(),
            (Some("welford"), None) => UpdateRule::Welford,
            (Some("welford"), Some(_)) => {
                return Err(Error::config(key("alpha"), "only applies to the ema update rule"))
            }
            (Some("ema") | None, alpha) => {
                let alpha = alpha.unwrap_or(0.1);
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::config(key("alpha"), format!("{alpha} is outside (0, 1]")));
                }
                UpdateRule::Ema(alpha)
            }
            (Some(other), _) => {
                return Err(Error::config(
                    key("update_rule"),
                    format!("unknown update rule '{other}' (expected welford or ema)"),
                ))
            }
        };
        if strategy == Strategy::DbNoBalance && rule != UpdateRule::Welford {
            return Err(Error::config(key("update_rule"), "db_no_balance uses the running-mean rule"));
        }
        Ok(Method::new(strategy, statistic).with_rule(rule))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Option<String>,
    merge_ic: Option<bool>,
    layer_sizes: Option<Vec<usize>>,
    n_residual: Option<usize>,
    n_condition: Option<usize>,
    max_train_steps: Option<u64>,
    learning_rate: Option<f64>,
    weight_update_stride: Option<u64>,
    eval_resolution: Option<usize>,
    log_stride: Option<u64>,
    seeds: Option<Vec<u64>>,
    base_seed: Option<u64>,
    repeats: Option<usize>,
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
    strategy: Option<String>,
    statistic: Option<String>,
    update_rule: Option<String>,
    alpha: Option<f64>,
    method: Option<Vec<RawMethod>>,
}

#[derive(Debug, Serialize)]
struct NormalizedConfig {
    problem: String,
    merge_ic: bool,
    layer_sizes: Vec<usize>,
    n_residual: usize,
    n_condition: usize,
    max_train_steps: u64,
    learning_rate: f64,
    weight_update_stride: u64,
    eval_resolution: usize,
    log_stride: u64,
    seeds: Vec<u64>,
    output_dir: String,
    workers: usize,
    method: Vec<RawMethod>,
}

/// Key named in a TOML decoding error, if any.
fn toml_error_key(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .filter(|k| !k.is_empty() && !k.contains(' '))
        .unwrap_or("config")
        .to_string()
}

/// Parses TOML config text. Missing keys take the defaults of
/// [`TrainConfig::default`]; the seed set defaults to `[0]` and the output
/// directory to `runs`.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().trim().to_string();
        Error::config(toml_error_key(&msg), msg)
    })?;
    let d = TrainConfig::default();
    let problem = raw.problem.ok_or_else(|| Error::config("problem", "missing"))?;

    let top = RawMethod {
        strategy: raw.strategy,
        statistic: raw.statistic,
        update_rule: raw.update_rule,
        alpha: raw.alpha,
    };
    let methods = match raw.method {
        Some(list) => {
            if !top.is_empty() {
                return Err(Error::config(
                    "method",
                    "give either top-level strategy keys or [[method]] tables, not both",
                ));
            }
            list.iter()
                .enumerate()
                .map(|(i, m)| m.resolve(&format!("method[{i}].")))
                .collect::<Result<Vec<_>>>()?
        }
        None => {
            if top.strategy.is_none() {
                return Err(Error::config("strategy", "missing"));
            }
            vec![top.resolve("")?]
        }
    };

    let seeds = match (raw.seeds, raw.base_seed, raw.repeats) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(Error::config("seeds", "give either seeds or base_seed/repeats"))
        }
        (Some(s), None, None) => s,
        (None, base, repeats) => {
            let base = base.unwrap_or(0);
            let n = repeats.unwrap_or(1) as u64;
            (0..n)
                .map(|k| base.checked_add(k).ok_or_else(|| Error::config("base_seed", "seed range overflows")))
                .collect::<Result<_>>()?
        }
    };

    let cfg = ExperimentConfig {
        template: TrainConfig {
            problem,
            merge_ic: raw.merge_ic.unwrap_or(d.merge_ic),
            layer_sizes: raw.layer_sizes.unwrap_or(d.layer_sizes),
            n_residual: raw.n_residual.unwrap_or(d.n_residual),
            n_condition: raw.n_condition.unwrap_or(d.n_condition),
            max_train_steps: raw.max_train_steps.unwrap_or(d.max_train_steps),
            learning_rate: raw.learning_rate.unwrap_or(d.learning_rate),
            method: methods[0],
            weight_update_stride: raw.weight_update_stride.unwrap_or(d.weight_update_stride),
            seed: seeds.first().copied().unwrap_or(0),
            eval_resolution: raw.eval_resolution.unwrap_or(d.eval_resolution),
            log_stride: raw.log_stride.unwrap_or(d.log_stride),
        },
        methods,
        seeds,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("runs")),
        workers: raw.workers.unwrap_or(1),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}
