//! Error metrics against closed-form solutions on a fixed grid.

use std::io::Write;
use std::path::Path;

use crate::autodiff::{JetModel, JetSpec};
use crate::error::{Error, Result};
use crate::pde::{PdeProblem, Point};

/// `||pred - ref||_2 / ||ref||_2`
pub fn l2re(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::usage(format!(
            "l2re: {} predictions vs {} reference values",
            pred.len(),
            reference.len()
        )));
    }
    let ref_norm = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if ref_norm == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let err_norm = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum::<f64>()
        .sqrt();
    Ok(err_norm / ref_norm)
}

/// Mean absolute error.
pub fn mae(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::usage(format!(
            "mae: {} predictions vs {} reference values",
            pred.len(),
            reference.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::usage("mae of empty vectors"));
    }
    Ok(pred.iter().zip(reference).map(|(p, r)| (p - r).abs()).sum::<f64>() / pred.len() as f64)
}

/// Tensor-product grid covering the domain bounds inclusively, with the
/// exact solution at each node. Points are ordered with the first axis
/// varying slowest.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    pub resolution: usize,
    pub points: Vec<Point>,
    pub reference: Vec<f64>,
}

impl EvalGrid {
    pub fn new(problem: &PdeProblem, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::config("eval_resolution", "must be at least 2"));
        }
        let [bx, by] = problem.bounds();
        let node = |(lo, hi): (f64, f64), k: usize| {
            if k == resolution - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (resolution - 1) as f64
            }
        };
        let mut points = Vec::with_capacity(resolution * resolution);
        for i in 0..resolution {
            for j in 0..resolution {
                points.push([node(bx, i), node(by, j)]);
            }
        }
        let reference = points.iter().map(|&p| problem.exact(p)).collect();
        Ok(Self {
            resolution,
            points,
            reference,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub l2re: f64,
    pub mae: f64,
    pub abs_error: Vec<f64>,
}

pub fn evaluate_on<M: JetModel>(model: &M, grid: &EvalGrid) -> Result<EvalReport> {
    let pred = model.jets(grid.points.as_flattened(), &JetSpec::value_only())?;
    let pred = pred.value();
    Ok(EvalReport {
        l2re: l2re(pred, &grid.reference)?,
        mae: mae(pred, &grid.reference)?,
        abs_error: pred.iter().zip(&grid.reference).map(|(p, r)| (p - r).abs()).collect(),
    })
}

/// Builds the grid and scores the model on it (value channel only).
pub fn evaluate<M: JetModel>(model: &M, problem: &PdeProblem, resolution: usize) -> Result<(EvalReport, EvalGrid)> {
    let grid = EvalGrid::new(problem, resolution)?;
    Ok((evaluate_on(model, &grid)?, grid))
}

/// Writes `x,<t|y>,abs_error` rows.
pub fn write_pointwise_csv(path: &Path, problem: &PdeProblem, grid: &EvalGrid, report: &EvalReport) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    let [a, b] = problem.axis_names();
    writeln!(w, "{a},{b},abs_error").map_err(io)?;
    for (p, e) in grid.points.iter().zip(&report.abs_error) {
        writeln!(w, "{},{},{}", p[0], p[1], e).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{make_helmholtz, make_wave, ZeroModel};

    #[test]
    fn l2re_examples() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(l2re(&r, &r).unwrap(), 0.0);
        assert_eq!(l2re(&[0.0; 3], &r).unwrap(), 1.0);
        let p: Vec<f64> = r.iter().map(|v| 1.1 * v).collect();
        assert!((l2re(&p, &r).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(l2re(&[1.0], &[0.0]), Err(Error::DegenerateReference)));
    }

    #[test]
    fn mae_examples() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(mae(&r, &r).unwrap(), 0.0);
        let p: Vec<f64> = r.iter().map(|v| v + 0.5).collect();
        assert!((mae(&p, &r).unwrap() - 0.5).abs() < 1e-15);
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn grid_is_inclusive() {
        let g = EvalGrid::new(&make_helmholtz(), 5).unwrap();
        assert_eq!(g.points.len(), 25);
        assert_eq!(g.points[0], [-1.0, -1.0]);
        assert_eq!(g.points[24], [1.0, 1.0]);
        assert!(EvalGrid::new(&make_helmholtz(), 1).is_err());
    }

    #[test]
    fn perfect_and_zero_predictors() {
        let p = make_wave();
        let (rep, _) = evaluate(&p.exact_solution(), &p, 41).unwrap();
        assert!(rep.l2re < 1e-12);
        let (rep, _) = evaluate(&ZeroModel, &p, 41).unwrap();
        assert_eq!(rep.l2re, 1.0);
    }

    #[test]
    fn helmholtz_zero_network_mae() {
        use std::f64::consts::PI;
        let p = make_helmholtz();
        let (rep, _) = evaluate(&ZeroModel, &p, 101).unwrap();
        let mut s = 0.0;
        for i in 0..101 {
            for j in 0..101 {
                let x = -1.0 + 2.0 * i as f64 / 100.0;
                let y = -1.0 + 2.0 * j as f64 / 100.0;
                s += ((PI * x).sin() * (4.0 * PI * y).sin()).abs();
            }
        }
        assert!((rep.mae - s / 10201.0).abs() < 1e-12);
    }
}
