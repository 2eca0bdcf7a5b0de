use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dbpinn::experiment::{
    parse_config, run_experiment_with, summarize_dir, ExperimentConfig, SummaryRow, OUTPUT_DIR_ENV,
};
use dbpinn::train::RunStatus;
use dbpinn::Error;

/// Train PINNs with adaptive loss weighting and summarize seeded sweeps.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) pair of an experiment config.
    Run { config: PathBuf },
    /// Parse a config and print it with all defaults filled in.
    Validate { config: PathBuf },
    /// Recompute summary.csv of a finished experiment directory.
    Summarize { dir: PathBuf },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUN_FAILED: u8 = 2;

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let mut config = parse_config(path)?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        config.output_dir = PathBuf::from(dir);
    }
    Ok(config)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into())
}

fn print_table(rows: &[SummaryRow]) {
    println!(
        "{:<24} {:>4} {:>6}  {:>22}  {:>22}",
        "method", "runs", "failed", "l2re (mean ± std)", "mae (mean ± std)"
    );
    for r in rows {
        println!(
            "{:<24} {:>4} {:>6}  {:>10} ± {:<10}  {:>10} ± {:<10}",
            r.method.label(),
            r.runs,
            r.failed,
            fmt_opt(r.l2re_mean),
            fmt_opt(r.l2re_std),
            fmt_opt(r.mae_mean),
            fmt_opt(r.mae_std)
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => load(&config).map(|c| {
            print!("{}", c.to_toml());
            ExitCode::SUCCESS
        }),
        Command::Summarize { dir } => summarize_dir(&dir).map(|rows| {
            print_table(&rows);
            if rows.iter().any(|r| r.failed == r.runs) {
                ExitCode::from(EXIT_RUN_FAILED)
            } else {
                ExitCode::SUCCESS
            }
        }),
        Command::Run { config } => load(&config).and_then(|c| {
            let total = c.methods.len() * c.seeds.len();
            eprintln!("{} runs of {} -> {}", total, c.template.problem, c.output_dir.display());
            let summary = run_experiment_with(&c, |run| {
                let r = &run.record;
                match &r.status {
                    RunStatus::Completed => {
                        let (l2re, mae) = r.final_metrics().unwrap_or((f64::NAN, f64::NAN));
                        eprintln!(
                            "{} seed {}: l2re {l2re:.4e}  mae {mae:.4e}  ({:.1} s)",
                            run.method(),
                            run.seed(),
                            r.wall_time_secs
                        );
                    }
                    RunStatus::Aborted { diagnostic, .. } => {
                        eprintln!("{} seed {}: FAILED {diagnostic}", run.method(), run.seed());
                    }
                }
            })?;
            print_table(&summary.rows);
            Ok(if summary.any_cell_failed() {
                ExitCode::from(EXIT_RUN_FAILED)
            } else {
                ExitCode::SUCCESS
            })
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}
