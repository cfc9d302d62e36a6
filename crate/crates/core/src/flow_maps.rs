//! Degree-one monotone circle maps in displacement form.
//!
//! A flow map `X` is stored as `lambda_j = X(a_j) - a_j` on the label grid,
//! its inverse `A` as `ell_j = A(x_j) - x_j` on the position grid. Both are
//! periodic, so the winding across the seam never has to be tracked
//! explicitly. All interior arithmetic is done in cell units
//! (`disp * m`, exact because `m` is a power of two) relative to an integer
//! base index, which makes stepping and inversion exactly equivariant under
//! integer-cell translations.

use std::fmt::Write as _;

use thiserror::Error;

use crate::fields::interp::{hermite, hermite_slope, limited_slope};
use crate::fields::{MonotoneCubic, PeriodicGrid, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("map is near-singular: min Jacobian {min_jacobian} <= {eps_jac}")]
    NearSingularMap { min_jacobian: f64, eps_jac: f64 },
    #[error("grid mismatch: map has {map} points, field has {field}")]
    GridMismatch { map: usize, field: usize },
}

/// Forward flow `X(a) = a + lambda(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleDiffeo {
    grid: PeriodicGrid,
    disp: Vec<f64>,
}

/// Back-to-labels map `A(x) = x + ell(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseMap {
    grid: PeriodicGrid,
    disp: Vec<f64>,
}

macro_rules! displacement_map {
    ($ty:ident, $head:literal) => {
        impl $ty {
            pub fn identity(grid: PeriodicGrid) -> Self {
                Self {
                    grid,
                    disp: vec![0.0; grid.len()],
                }
            }

            /// Rigid rotation by `shift`.
            pub fn rotation(grid: PeriodicGrid, shift: f64) -> Self {
                Self {
                    grid,
                    disp: vec![shift; grid.len()],
                }
            }

            pub fn from_displacement(grid: PeriodicGrid, disp: Vec<f64>) -> Result<Self, FlowError> {
                if disp.len() != grid.len() {
                    return Err(FlowError::GridMismatch {
                        map: disp.len(),
                        field: grid.len(),
                    });
                }
                Ok(Self { grid, disp })
            }

            /// Sample an absolute map `a -> position` on the grid.
            pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
                let disp = grid.points().map(|a| f(a) - a).collect();
                Self { grid, disp }
            }

            #[inline]
            pub fn grid(&self) -> PeriodicGrid {
                self.grid
            }

            #[inline]
            pub fn displacement(&self) -> &[f64] {
                &self.disp
            }

            /// Smallest discrete Jacobian `(X_{j+1} - X_j) / dx`, seam included.
            pub fn min_jacobian(&self) -> f64 {
                min_jacobian(&self.disp)
            }

            /// `sum_j (X_{j+1} - X_j)`; one for a degree-one map.
            pub fn winding(&self) -> f64 {
                let m = self.disp.len();
                (0..m)
                    .map(|j| self.grid.dx() + self.disp[(j + 1) % m] - self.disp[j])
                    .sum()
            }

            /// Evaluate the monotone interpolant of the map at any real point.
            pub fn eval(&self, x: f64) -> f64 {
                let m = self.disp.len();
                let s = x * m as f64;
                let c = s.floor();
                let theta = s - c;
                let c = c as i64;
                let base = self.grid.wrap(c);
                // cells relative to knot `base`, then back to torus units
                let knots = MapKnots::new(&self.disp);
                (c as f64 + knots.relative(base, theta)) / m as f64
            }

            pub fn to_csv(&self) -> String {
                let mut out = String::from($head);
                out.push('\n');
                for (x, v) in self.grid.points().zip(&self.disp) {
                    let _ = writeln!(out, "{x:.16e},{v:.16e}");
                }
                out
            }
        }
    };
}

displacement_map!(CircleDiffeo, "a,lambda");
displacement_map!(InverseMap, "x,ell");

impl CircleDiffeo {
    /// One explicit Euler–Maruyama step
    /// `X_j <- X_j + h u(X_j) + dw`; the noise is the same for every label.
    pub fn em_step(&self, u: &ScalarField, h: f64, dw: f64) -> Result<CircleDiffeo, FlowError> {
        if u.grid() != self.grid {
            return Err(FlowError::GridMismatch {
                map: self.grid.len(),
                field: u.grid().len(),
            });
        }
        let mut out = self.clone();
        out.advance(&MonotoneCubic::new(u), h, dw);
        Ok(out)
    }

    /// In-place [`Self::em_step`] against a prebuilt interpolant.
    pub fn advance(&mut self, u: &MonotoneCubic, h: f64, dw: f64) {
        let m = self.disp.len() as f64;
        for (j, lam) in self.disp.iter_mut().enumerate() {
            let vel = u.eval_offset(j, *lam * m);
            *lam += h * vel + dw;
        }
    }

    /// Noise-only step: rigid rotation of every label by `dw`.
    pub fn rotate(&mut self, dw: f64) {
        for lam in &mut self.disp {
            *lam += dw;
        }
    }

    /// Spatial inverse. Fails with [`FlowError::NearSingularMap`] when the
    /// smallest Jacobian is at or below `eps_jac`.
    pub fn invert(&self, eps_jac: f64) -> Result<InverseMap, FlowError> {
        Ok(InverseMap {
            grid: self.grid,
            disp: invert_displacement(&self.disp, eps_jac)?,
        })
    }
}

impl InverseMap {
    pub fn invert(&self, eps_jac: f64) -> Result<CircleDiffeo, FlowError> {
        Ok(CircleDiffeo {
            grid: self.grid,
            disp: invert_displacement(&self.disp, eps_jac)?,
        })
    }
}

/// `max_j |X(A(x_j)) - x_j|` with `X` evaluated through its interpolant.
pub fn composition_residual(map: &CircleDiffeo, inverse: &InverseMap) -> f64 {
    let g = map.grid();
    g.points()
        .zip(inverse.displacement())
        .map(|(x, l)| (map.eval(x + l) - x).abs())
        .fold(0.0, f64::max)
}

fn min_jacobian(disp: &[f64]) -> f64 {
    let m = disp.len();
    let scale = m as f64;
    (0..m)
        .map(|j| {
            let next = if j + 1 == m { disp[0] } else { disp[j + 1] };
            1.0 + (next - disp[j]) * scale
        })
        .fold(f64::INFINITY, f64::min)
}

/// Knot data of `X` in cell units: displacement, secant and limited slope
/// per label cell.
struct MapKnots {
    lam: Vec<f64>,
    secant: Vec<f64>,
    slope: Vec<f64>,
}

impl MapKnots {
    fn new(disp: &[f64]) -> Self {
        let m = disp.len();
        let scale = m as f64;
        let lam: Vec<f64> = disp.iter().map(|d| d * scale).collect();
        let at = |j: usize, off: isize| lam[(j as isize + off).rem_euclid(m as isize) as usize];
        let secant = (0..m).map(|c| (1.0 + at(c, 1)) - lam[c]).collect();
        let slope = (0..m)
            .map(|c| {
                limited_slope(
                    -2.0 + at(c, -2),
                    -1.0 + at(c, -1),
                    lam[c],
                    1.0 + at(c, 1),
                    2.0 + at(c, 2),
                )
            })
            .collect();
        Self { lam, secant, slope }
    }

    #[inline]
    fn next(&self, c: usize) -> usize {
        if c + 1 == self.lam.len() {
            0
        } else {
            c + 1
        }
    }

    /// `X(c + theta) - c` in cells, for a wrapped knot index `c`.
    #[inline]
    fn relative(&self, c: usize, theta: f64) -> f64 {
        hermite(self.lam[c], self.secant[c], self.slope[c], self.slope[self.next(c)], theta)
    }
}

/// Solve `X(a) = x_j` on every grid point and return `A(x_j) - x_j`.
fn invert_displacement(disp: &[f64], eps_jac: f64) -> Result<Vec<f64>, FlowError> {
    let min_jac = min_jacobian(disp);
    if !(min_jac > eps_jac) {
        return Err(FlowError::NearSingularMap {
            min_jacobian: min_jac,
            eps_jac,
        });
    }
    let m = disp.len();
    let scale = m as f64;
    let knots = MapKnots::new(disp);
    let wrap = |c: i64| c.rem_euclid(m as i64) as usize;
    // g(c) = X(c) - j in cells, for label cell c relative to target j
    let g = |c: i64, j: i64| (c - j) as f64 + knots.lam[wrap(c)];

    let mut out = Vec::with_capacity(m);
    // first bracket from the displacement at x_0: A(0) ~ -lambda
    let mut c: i64 = (-knots.lam[0]).floor() as i64;
    for j in 0..m as i64 {
        while g(c, j) > 0.0 {
            c -= 1;
        }
        while g(c + 1, j) <= 0.0 {
            c += 1;
        }
        let cw = wrap(c);
        let a0 = g(c, j);
        let theta = solve_cell(&knots, cw, a0);
        out.push(((c - j) as f64 + theta) / scale);
    }
    Ok(out)
}

/// Find `theta` in `[0, 1]` with `a0 + H(theta) = 0`, where `H` is the
/// Hermite cubic of cell `c` minus its left knot value.
fn solve_cell(knots: &MapKnots, c: usize, a0: f64) -> f64 {
    let s = knots.secant[c];
    let d0 = knots.slope[c];
    let d1 = knots.slope[knots.next(c)];
    let f = |t: f64| a0 + hermite(0.0, s, d0, d1, t);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut t = (-a0 / s).clamp(0.0, 1.0);
    for _ in 0..64 {
        let v = f(t);
        if v.abs() <= 1e-14 {
            break;
        }
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let dv = hermite_slope(s, d0, d1, t);
        let newton = t - v / dv;
        t = if dv > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 {
            break;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(m: usize) -> PeriodicGrid {
        PeriodicGrid::new(m).unwrap()
    }

    #[test]
    fn identity_map() {
        let g = grid(8);
        let id = CircleDiffeo::identity(g);
        assert!(id.displacement().iter().all(|&d| d == 0.0));
        assert_eq!(id.min_jacobian(), 1.0);
        let inv = id.invert(1e-3).unwrap();
        assert_eq!(inv.displacement(), id.displacement());
    }

    #[test]
    fn rotations_invert_to_rotations() {
        let g = grid(64);
        let r = CircleDiffeo::rotation(g, 0.3);
        let inv = r.invert(1e-3).unwrap();
        for d in inv.displacement() {
            assert!((d + 0.3).abs() < 1e-14, "{d}");
        }
        // large windings are fine too
        let r = CircleDiffeo::rotation(g, -7.61);
        for d in r.invert(1e-3).unwrap().displacement() {
            assert!((d - 7.61).abs() < 1e-13, "{d}");
        }
    }

    #[test]
    fn pure_noise_and_constant_velocity_steps() {
        let g = grid(32);
        let id = CircleDiffeo::identity(g);
        let zero = ScalarField::zeros(g);
        let rot = id.em_step(&zero, 1e-3, 0.3).unwrap();
        assert!(rot.displacement().iter().all(|&d| d == 0.3));
        let c = ScalarField::constant(g, 2.0);
        let moved = id.em_step(&c, 1e-3, 0.0).unwrap();
        assert!(moved.displacement().iter().all(|&d| (d - 2e-3).abs() < 1e-18));
    }

    #[test]
    fn one_step_from_identity_with_sine() {
        let g = grid(64);
        let u = ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap();
        let x = CircleDiffeo::identity(g).em_step(&u, 1e-3, 0.0).unwrap();
        for (j, d) in x.displacement().iter().enumerate() {
            // velocity evaluated exactly at knots
            assert_eq!(*d, 1e-3 * u.values()[j]);
        }
    }

    #[test]
    fn min_jacobian_cases() {
        let g = grid(256);
        let eps = 1e-3;
        let x = CircleDiffeo::from_fn(g, |a| a + eps * (2.0 * PI * a).sin());
        // finite difference of 1 + 2 pi eps cos at the worst cell
        let want = (0..256)
            .map(|j| {
                let (a, b) = (g.point(j), g.point(j) + g.dx());
                1.0 + eps * ((2.0 * PI * b).sin() - (2.0 * PI * a).sin()) / g.dx()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((x.min_jacobian() - want).abs() < 1e-12);
        assert!((x.min_jacobian() - (1.0 - 2.0 * PI * eps)).abs() < 1e-3);

        let mut disp = vec![0.0; 8];
        disp[5] = 0.0;
        disp[6] = -0.125; // X_6 = X_5
        let pinch = CircleDiffeo::from_displacement(grid(8), disp).unwrap();
        assert_eq!(pinch.min_jacobian(), 0.0);
        assert!(matches!(pinch.invert(1e-3), Err(FlowError::NearSingularMap { .. })));
    }

    #[test]
    fn inverse_of_sine_perturbation() {
        let g = grid(256);
        let exact = |a: f64| a + 0.1 * (2.0 * PI * a).sin();
        let x = CircleDiffeo::from_fn(g, exact);
        let a = x.invert(1e-3).unwrap();
        let err = g
            .points()
            .zip(a.displacement())
            .map(|(p, l)| (exact(p + l) - p).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "err = {err:e}");
        assert!(composition_residual(&x, &a) < 1e-12);
    }

    #[test]
    fn double_inversion_and_winding() {
        let f = |a: f64| a + 0.37 + 0.08 * (2.0 * PI * a).sin() - 0.02 * (6.0 * PI * a).cos();
        let mut errs = vec![];
        for m in [64, 128, 256, 512, 1024] {
            let x = CircleDiffeo::from_fn(grid(m), f);
            let back = x.invert(1e-3).unwrap().invert(1e-3).unwrap();
            let d = x
                .displacement()
                .iter()
                .zip(back.displacement())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!((x.winding() - 1.0).abs() < 1e-12);
            assert!((x.invert(1e-3).unwrap().winding() - 1.0).abs() < 1e-12);
            errs.push(d);
        }
        // strongly compressed map: the rate settles from ~2.7 towards 4
        assert!(errs.windows(2).all(|w| w[1] < w[0] / 6.0), "{errs:?}");
        assert!(errs[4] < 1e-7, "{errs:?}");
    }

    #[test]
    fn composition_error_order() {
        let exact = |a: f64| a + 0.1 * (2.0 * PI * a).sin() + 0.03 * (4.0 * PI * a).cos();
        let errs: Vec<f64> = [64, 128, 256, 512]
            .iter()
            .map(|&m| {
                let g = grid(m);
                let a = CircleDiffeo::from_fn(g, exact).invert(1e-3).unwrap();
                g.points()
                    .zip(a.displacement())
                    .map(|(p, l)| (exact(p + l) - p).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        // at least third order under grid doubling
        assert!(errs.windows(2).all(|w| w[0] / w[1] >= 8.0), "{errs:?}");
    }

    #[test]
    fn rotation_equivariance_of_noise_steps() {
        // stepping with u = 0 then rotating equals rotating then stepping
        let g = grid(64);
        let zero = ScalarField::zeros(g);
        let x = CircleDiffeo::from_fn(g, |a| a + 0.05 * (2.0 * PI * a).cos());
        let a = x.em_step(&zero, 1e-2, 0.2).unwrap().em_step(&zero, 1e-2, 0.1).unwrap();
        let b = x.em_step(&zero, 1e-2, 0.1).unwrap().em_step(&zero, 1e-2, 0.2).unwrap();
        for (p, q) in a.displacement().iter().zip(b.displacement()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_headers() {
        let g = grid(8);
        assert!(CircleDiffeo::identity(g).to_csv().starts_with("a,lambda\n"));
        assert!(InverseMap::identity(g).to_csv().starts_with("x,ell\n"));
    }
}
