//! Benchmark problems with closed-form solutions.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::autodiff::DualScalar;

/// Arithmetic needed to state a residual operator once for both plain
/// floats and tape-recorded scalars.
pub trait Field:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self> + Sub<f64, Output = Self>
{
}

impl Field for f64 {}
impl<'t> Field for DualScalar<'t> {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    KleinGordon,
    Wave,
    Helmholtz,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::KleinGordon, ProblemKind::Wave, ProblemKind::Helmholtz];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::KleinGordon => "klein-gordon",
            ProblemKind::Wave => "wave",
            ProblemKind::Helmholtz => "helmholtz",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn axis_names(self) -> [&'static str; 2] {
        match self {
            ProblemKind::Helmholtz => ["x", "y"],
            _ => ["x", "t"],
        }
    }

    pub fn bounds(self) -> [(f64, f64); 2] {
        match self {
            ProblemKind::Helmholtz => [(-1.0, 1.0), (-1.0, 1.0)],
            _ => [(0.0, 1.0), (0.0, 1.0)],
        }
    }

    /// Residual `N[u] - f` given `u` and its second derivatives along both axes.
    ///
    /// * Klein-Gordon: `u_tt - u_xx + u^3 - f`
    /// * Wave: `u_tt - 4 u_xx`
    /// * Helmholtz: `u_xx + u_yy + u - q`
    pub fn residual<T: Field>(self, u: T, d2: [T; 2], forcing: f64) -> T {
        match self {
            ProblemKind::KleinGordon => d2[1] - d2[0] + u * u * u - forcing,
            ProblemKind::Wave => d2[1] - d2[0] * 4.0,
            ProblemKind::Helmholtz => d2[0] + d2[1] + u - forcing,
        }
    }

    /// Partial derivatives of the residual w.r.t. `(u, [u_aa, u_bb])`.
    pub fn residual_partials(self, u: f64) -> (f64, [f64; 2]) {
        match self {
            ProblemKind::KleinGordon => (3.0 * u * u, [-1.0, 1.0]),
            ProblemKind::Wave => (0.0, [-4.0, 1.0]),
            ProblemKind::Helmholtz => (1.0, [1.0, 1.0]),
        }
    }

    /// Closed-form `(u, d u/d axis, d^2 u/d axis^2)` at `p`.
    pub fn exact_jet(self, p: [f64; 2], axis: usize) -> [f64; 3] {
        let [x, y] = p;
        match self {
            ProblemKind::KleinGordon => {
                let t = y;
                let c = (5.0 * PI * t).cos();
                let s = (5.0 * PI * t).sin();
                let u = x * c + (x * t).powi(3);
                if axis == 0 {
                    [u, c + 3.0 * x * x * t.powi(3), 6.0 * x * t.powi(3)]
                } else {
                    [
                        u,
                        -5.0 * PI * x * s + 3.0 * x.powi(3) * t * t,
                        -25.0 * PI * PI * x * c + 6.0 * x.powi(3) * t,
                    ]
                }
            }
            ProblemKind::Wave => {
                let t = y;
                let (s1, c1) = (PI * x).sin_cos();
                let (s4, c4) = (4.0 * PI * x).sin_cos();
                let (st2, ct2) = (2.0 * PI * t).sin_cos();
                let (st8, ct8) = (8.0 * PI * t).sin_cos();
                let u = s1 * ct2 + 0.5 * s4 * ct8;
                if axis == 0 {
                    [
                        u,
                        PI * c1 * ct2 + 2.0 * PI * c4 * ct8,
                        -PI * PI * s1 * ct2 - 8.0 * PI * PI * s4 * ct8,
                    ]
                } else {
                    [
                        u,
                        -2.0 * PI * s1 * st2 - 4.0 * PI * s4 * st8,
                        -4.0 * PI * PI * s1 * ct2 - 32.0 * PI * PI * s4 * ct8,
                    ]
                }
            }
            ProblemKind::Helmholtz => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (4.0 * PI * y).sin_cos();
                let u = sx * sy;
                if axis == 0 {
                    [u, PI * cx * sy, -PI * PI * u]
                } else {
                    [u, 4.0 * PI * sx * cy, -16.0 * PI * PI * u]
                }
            }
        }
    }

    pub fn exact(self, p: [f64; 2]) -> f64 {
        self.exact_jet(p, 0)[0]
    }

    /// Forcing term. Klein-Gordon uses the manufactured forcing
    /// `h_tt - h_xx + h^3` of its closed-form solution `h`.
    pub fn forcing(self, p: [f64; 2]) -> f64 {
        match self {
            ProblemKind::KleinGordon => {
                let [h, _, h_xx] = self.exact_jet(p, 0);
                let h_tt = self.exact_jet(p, 1)[2];
                h_tt - h_xx + h * h * h
            }
            ProblemKind::Wave => 0.0,
            ProblemKind::Helmholtz => {
                let s = (PI * p[0]).sin() * (4.0 * PI * p[1]).sin();
                -PI * PI * s - (4.0 * PI).powi(2) * s + s
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values() {
        assert_eq!(ProblemKind::KleinGordon.exact([1.0, 0.0]), 1.0);
        assert!((ProblemKind::Wave.exact([0.5, 0.0]) - 1.0).abs() < 1e-15);
        for p in [[1.0, 0.3], [-1.0, -0.7], [0.2, 1.0], [0.9, -1.0]] {
            assert!(ProblemKind::Helmholtz.exact(p).abs() < 1e-14);
        }
    }

    #[test]
    fn helmholtz_forcing_value() {
        let q = ProblemKind::Helmholtz.forcing([0.5, 0.125]);
        let expect = 1.0 - 17.0 * PI * PI;
        assert!((q - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn wave_initial_velocity_is_zero() {
        assert!(ProblemKind::Wave.exact_jet([0.3, 0.0], 1)[1].abs() < 1e-15);
        assert!(ProblemKind::KleinGordon.exact_jet([0.3, 0.0], 1)[1].abs() < 1e-15);
    }

    #[test]
    fn closed_form_derivatives_match_differences() {
        let h = 1e-4;
        for kind in ProblemKind::ALL {
            let p = [0.37, 0.61];
            for axis in 0..2 {
                let shift = |d: f64| {
                    let mut q = p;
                    q[axis] += d;
                    kind.exact(q)
                };
                let [u, d1, d2] = kind.exact_jet(p, axis);
                let fd1 = (shift(h) - shift(-h)) / (2.0 * h);
                let fd2 = (shift(h) - 2.0 * u + shift(-h)) / (h * h);
                assert!((d1 - fd1).abs() < 1e-5 * (1.0 + d1.abs()), "{kind:?} d1 axis {axis}");
                assert!((d2 - fd2).abs() < 1e-4 * (1.0 + d2.abs()), "{kind:?} d2 axis {axis}");
            }
        }
    }
}
