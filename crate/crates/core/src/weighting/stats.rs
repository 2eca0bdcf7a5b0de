use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Gradient-distribution statistic used for gradient-ratio weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradStatistic {
    /// max |g| over mean |g|
    Mean,
    /// population standard deviation, like-for-like
    Std,
    /// non-excess kurtosis m4 / m2^2, like-for-like
    Kurtosis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatPosition {
    Numerator,
    Denominator,
}

impl GradStatistic {
    pub const ALL: [GradStatistic; 3] = [GradStatistic::Mean, GradStatistic::Std, GradStatistic::Kurtosis];

    pub fn name(self) -> &'static str {
        match self {
            GradStatistic::Mean => "mean",
            GradStatistic::Std => "std",
            GradStatistic::Kurtosis => "kurtosis",
        }
    }
}

impl fmt::Display for GradStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradStatistic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(GradStatistic::Mean),
            "std" => Ok(GradStatistic::Std),
            "kurtosis" | "kurt" => Ok(GradStatistic::Kurtosis),
            other => Err(format!("unknown statistic '{other}' (expected mean, std or kurtosis)")),
        }
    }
}

/// Second and fourth central moments (population).
fn central_moments(g: &[f64]) -> (f64, f64) {
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in g {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    (m2 / n, m4 / n)
}

/// Statistic of a gradient vector in the numerator or denominator of a
/// gradient ratio.
pub fn grad_stat(g: &[f64], stat: GradStatistic, position: StatPosition) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::usage("statistic of an empty gradient"));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::overflow("gradient statistic input"));
    }
    let value = match stat {
        GradStatistic::Mean => match position {
            StatPosition::Numerator => g.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            StatPosition::Denominator => g.iter().map(|v| v.abs()).sum::<f64>() / g.len() as f64,
        },
        GradStatistic::Std | GradStatistic::Kurtosis => {
            let (m2, m4) = central_moments(g);
            if m2 == 0.0 {
                return Err(Error::DegenerateStatistic(format!("{stat} of a zero-variance gradient")));
            }
            if stat == GradStatistic::Std {
                m2.sqrt()
            } else {
                m4 / (m2 * m2)
            }
        }
    };
    if !value.is_finite() {
        return Err(Error::overflow(format!("{stat} statistic")));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use StatPosition::*;

    #[test]
    fn mean_kind() {
        let g = [1.0, -3.0, 2.0];
        assert_eq!(grad_stat(&g, GradStatistic::Mean, Numerator).unwrap(), 3.0);
        assert_eq!(grad_stat(&g, GradStatistic::Mean, Denominator).unwrap(), 2.0);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let g = [0.7; 5];
        for stat in [GradStatistic::Std, GradStatistic::Kurtosis] {
            for pos in [Numerator, Denominator] {
                assert!(matches!(grad_stat(&g, stat, pos), Err(Error::DegenerateStatistic(_))));
            }
        }
    }

    #[test]
    fn kurtosis_of_symmetric_two_point() {
        let g = [-1.0, 1.0, -1.0, 1.0];
        assert_eq!(grad_stat(&g, GradStatistic::Kurtosis, Denominator).unwrap(), 1.0);
    }

    #[test]
    fn std_is_population() {
        let g = [1.0, 2.0, 3.0, 4.0];
        let s = grad_stat(&g, GradStatistic::Std, Numerator).unwrap();
        assert!((s - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parses_names() {
        assert_eq!("std".parse::<GradStatistic>().unwrap(), GradStatistic::Std);
        assert!("median".parse::<GradStatistic>().unwrap_err().contains("unknown statistic"));
    }
}
