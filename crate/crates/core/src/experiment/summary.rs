use std::path::Path;

use super::{csv_error, opt, parse_config, run_dir, CONFIG_FILE, DIAGNOSTIC_FILE, HISTORY_FILE, SUMMARY_FILE};
use crate::error::{Error, Result};
use crate::train::{Method, TrainConfig};

/// Mean ± std of final metrics for one method across seeds. Failed runs
/// are counted but excluded from the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub runs: usize,
    pub failed: usize,
    pub l2re_mean: Option<f64>,
    pub l2re_std: Option<f64>,
    pub mae_mean: Option<f64>,
    pub mae_std: Option<f64>,
}

impl SummaryRow {
    pub fn status(&self) -> &'static str {
        match self.failed {
            0 => "ok",
            f if f == self.runs => "failed",
            _ => "partial",
        }
    }
}

/// Mean and sample (n - 1) standard deviation; the std of a single value
/// is 0.
pub fn mean_and_sample_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Groups `(method, final metrics or None if failed)` by method, in the
/// order of `methods`.
pub(super) fn summarize_finals(methods: &[Method], finals: &[(Method, Option<(f64, f64)>)]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|m| {
            let cell: Vec<_> = finals.iter().filter(|(k, _)| k == m).map(|(_, v)| *v).collect();
            let ok: Vec<(f64, f64)> = cell.iter().flatten().copied().collect();
            let l2re = mean_and_sample_std(&ok.iter().map(|v| v.0).collect::<Vec<_>>());
            let mae = mean_and_sample_std(&ok.iter().map(|v| v.1).collect::<Vec<_>>());
            SummaryRow {
                method: *m,
                runs: cell.len(),
                failed: cell.len() - ok.len(),
                l2re_mean: l2re.map(|v| v.0),
                l2re_std: l2re.map(|v| v.1),
                mae_mean: mae.map(|v| v.0),
                mae_std: mae.map(|v| v.1),
            }
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "method",
        "strategy",
        "statistic",
        "runs",
        "failed",
        "status",
        "l2re_mean",
        "l2re_std",
        "mae_mean",
        "mae_std",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.method.label(),
            r.method.strategy.to_string(),
            r.method.statistic.to_string(),
            r.runs.to_string(),
            r.failed.to_string(),
            r.status().to_string(),
            opt(r.l2re_mean),
            opt(r.l2re_std),
            opt(r.mae_mean),
            opt(r.mae_std),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Final `(l2re, mae)` from the last row of a history CSV.
pub fn read_final_metrics(path: &Path) -> Result<(f64, f64)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("missing column {name}"),
        })
    };
    let (il2, imae) = (column("l2re")?, column("mae")?);
    let mut last = None;
    for rec in r.records() {
        last = Some(rec.map_err(|e| csv_error(path, e))?);
    }
    let last = last.ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        message: "no rows".into(),
    })?;
    let num = |i: usize| {
        last[i].parse::<f64>().map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: format!("{}: {e}", &headers[i]),
        })
    };
    Ok((num(il2)?, num(imae)?))
}

/// Recomputes `summary.csv` in an experiment directory from the per-run
/// history files.
pub fn summarize_dir(dir: &Path) -> Result<Vec<SummaryRow>> {
    let config = parse_config(&dir.join(CONFIG_FILE))?;
    let mut finals = Vec::new();
    for TrainConfig { method, seed, .. } in config.run_configs() {
        let run = run_dir(dir, &method, seed);
        let metrics = if run.join(DIAGNOSTIC_FILE).exists() {
            None
        } else {
            Some(read_final_metrics(&run.join(HISTORY_FILE))?)
        };
        finals.push((method, metrics));
    }
    let rows = summarize_finals(&config.methods, &finals);
    write_summary_csv(&dir.join(SUMMARY_FILE), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weighting::{GradStatistic, Strategy};

    #[test]
    fn single_sample_std_is_zero() {
        assert_eq!(mean_and_sample_std(&[0.3]), Some((0.3, 0.0)));
        assert_eq!(mean_and_sample_std(&[]), None);
    }

    #[test]
    fn two_point_statistics() {
        let (m, s) = mean_and_sample_std(&[0.4, 0.6]).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!((s - 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rows_follow_requested_order_and_mark_failures() {
        let a = Method::new(Strategy::Db, GradStatistic::Std);
        let b = Method::new(Strategy::Equal, GradStatistic::Mean);
        let finals = [(b, Some((0.5, 0.1))), (a, None), (a, Some((0.2, 0.05))), (b, None)];
        let rows = summarize_finals(&[a, b], &finals);
        assert_eq!(rows[0].method, a);
        assert_eq!((rows[0].runs, rows[0].failed), (2, 1));
        assert_eq!(rows[0].l2re_mean, Some(0.2));
        assert_eq!(rows[1].status(), "partial");
        let none = summarize_finals(&[a], &[(a, None)]);
        assert_eq!(none[0].status(), "failed");
        assert_eq!(none[0].l2re_mean, None);
    }
}
