//! Seeded experiment sweeps: config parsing, per-run artifacts and
//! mean ± std summaries.
//!
//! Output layout:
//!
//! ```text
//! <output_dir>/config.toml               normalized config echo
//! <output_dir>/summary.csv               one row per method, in config order
//! <output_dir>/metadata.json             timestamps and wall times
//! <output_dir>/runs/<method>/seed-<s>/history.csv
//!                                    .../checkpoint.bin
//!                                    .../pointwise_error.csv
//!                                    .../diagnostic.txt   (failed runs only)
//! ```
//!
//! Everything except `metadata.json` is byte-identical across re-runs of
//! the same config.

mod config;
mod summary;

pub use config::{parse_config, parse_config_str, ExperimentConfig, OUTPUT_DIR_ENV};
pub use summary::{mean_and_sample_std, read_final_metrics, summarize_dir, write_summary_csv, SummaryRow};

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{evaluate_on, write_pointwise_csv, EvalGrid};
use crate::nn::write_checkpoint;
use crate::train::{train, Method, RunRecord, RunStatus, TrainConfig};

pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const POINTWISE_FILE: &str = "pointwise_error.csv";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.txt";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const METADATA_FILE: &str = "metadata.json";

pub fn run_dir(output_dir: &Path, method: &Method, seed: u64) -> PathBuf {
    output_dir.join("runs").join(method.label()).join(format!("seed-{seed}"))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub record: RunRecord,
}

impl RunOutcome {
    pub fn method(&self) -> Method {
        self.record.config.method
    }

    pub fn seed(&self) -> u64 {
        self.record.config.seed
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunOutcome>,
}

impl ExperimentSummary {
    /// True when every run of some method failed.
    pub fn any_cell_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed == r.runs)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_history_csv(path: &Path, record: &RunRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["step".to_string(), "residual_loss".to_string()];
    header.extend(record.condition_labels.iter().map(|l| format!("loss_{l}")));
    header.extend(record.condition_labels.iter().map(|l| format!("lambda_{l}")));
    header.extend(["G", "l2re", "mae"].map(String::from));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for row in &record.history {
        let mut fields = vec![row.step.to_string(), row.residual_loss.to_string()];
        fields.extend(row.condition_losses.iter().map(f64::to_string));
        fields.extend(row.lambdas.iter().map(f64::to_string));
        fields.push(opt(row.aggregated));
        fields.push(row.l2re.to_string());
        fields.push(row.mae.to_string());
        w.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_run_artifacts(dir: &Path, record: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_history_csv(&dir.join(HISTORY_FILE), record)?;
    write_checkpoint(&dir.join(CHECKPOINT_FILE), &record.params, record.steps_completed)?;
    let problem = record.config.build_problem()?;
    let grid = EvalGrid::new(&problem, record.config.eval_resolution)?;
    let pointwise = dir.join(POINTWISE_FILE);
    match evaluate_on(&record.params, &grid) {
        Ok(report) => write_pointwise_csv(&pointwise, &problem, &grid, &report)?,
        Err(_) if !record.is_completed() => {}
        Err(e) => return Err(e),
    }
    let diag = dir.join(DIAGNOSTIC_FILE);
    match &record.status {
        RunStatus::Completed => {
            if diag.exists() {
                std::fs::remove_file(&diag).map_err(|e| Error::io(&diag, e))?;
            }
        }
        RunStatus::Aborted { diagnostic, .. } => {
            std::fs::write(&diag, format!("{diagnostic}\n")).map_err(|e| Error::io(&diag, e))?
        }
    }
    Ok(())
}

fn run_one(output_dir: &Path, config: &TrainConfig) -> Result<RunOutcome> {
    let record = train(config)?;
    let dir = run_dir(output_dir, &config.method, config.seed);
    write_run_artifacts(&dir, &record)?;
    Ok(RunOutcome { dir, record })
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    run_experiment_with(config, |_| {})
}

/// Runs every (method, seed) pair on up to `workers` threads, calling
/// `on_run` as each finishes, then writes the summary and metadata.
pub fn run_experiment_with<F>(config: &ExperimentConfig, on_run: F) -> Result<ExperimentSummary>
where
    F: Fn(&RunOutcome) + Sync,
{
    config.validate()?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, config.to_toml()).map_err(|e| Error::io(&config_path, e))?;

    let started = unix_now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let runs: Vec<RunOutcome> = pool.install(|| {
        config
            .run_configs()
            .par_iter()
            .map(|c| {
                let outcome = run_one(out, c)?;
                on_run(&outcome);
                Ok(outcome)
            })
            .collect::<Result<_>>()
    })?;
    let finished = unix_now();

    let finals: Vec<(Method, Option<(f64, f64)>)> = runs
        .iter()
        .map(|r| {
            let metrics = if r.record.is_completed() { r.record.final_metrics() } else { None };
            (r.method(), metrics)
        })
        .collect();
    let rows = summary::summarize_finals(&config.methods, &finals);
    write_summary_csv(&out.join(SUMMARY_FILE), &rows)?;

    let metadata = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "finished_unix": finished,
        "wall_time_secs": finished - started,
        "runs": runs.iter().map(|r| serde_json::json!({
            "method": r.method().label(),
            "seed": r.seed(),
            "status": if r.record.is_completed() { "completed" } else { "failed" },
            "steps_completed": r.record.steps_completed,
            "wall_time_secs": r.record.wall_time_secs,
        })).collect::<Vec<_>>(),
    });
    let meta_path = out.join(METADATA_FILE);
    let text = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    std::fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))?;

    Ok(ExperimentSummary { rows, runs })
}
