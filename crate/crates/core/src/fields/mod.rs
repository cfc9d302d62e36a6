//! Uniform periodic grids on `[0, 1)` and the fields sampled on them.

pub(crate) mod interp;
mod spectral;

pub use interp::MonotoneCubic;
pub use spectral::{dft, Spectrum};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid size {0}: must be a power of two and at least 8")]
    InvalidGridSize(usize),
    #[error("non-finite sample {value} at x = {x}")]
    NonFiniteSample { x: f64, value: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// `m` equally spaced points `x_j = j / m` covering the torus once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodicGrid {
    m: usize,
}

impl PeriodicGrid {
    pub fn new(m: usize) -> Result<Self, FieldError> {
        if m < 8 || !m.is_power_of_two() {
            return Err(FieldError::InvalidGridSize(m));
        }
        Ok(Self { m })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m
    }

    /// Always false; grids hold at least eight points.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        1.0 / self.m as f64
    }

    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        j as f64 / self.m as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |j| self.point(j))
    }

    /// Largest retained wavenumber, `m/2 - 1` (the Nyquist mode is dropped).
    #[inline]
    pub fn max_mode(&self) -> usize {
        self.m / 2 - 1
    }

    /// Largest wavenumber kept by the 2/3 rule: products of two fields
    /// band-limited to this cutoff alias only onto discarded modes.
    #[inline]
    pub fn dealias_cutoff(&self) -> usize {
        (self.m - 1) / 3
    }

    /// Wrap an arbitrary integer index onto `0..m`.
    #[inline]
    pub fn wrap(&self, j: i64) -> usize {
        j.rem_euclid(self.m as i64) as usize
    }
}

/// Periodic real function sampled on a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((j, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FieldError::NonFiniteSample {
                x: grid.point(j),
                value: v,
            });
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan. Callers guarantee finite values.
    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    /// `values[j] = f(x_j)`.
    pub fn sample(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Result<Self, FieldError> {
        let values = grid.points().map(f).collect();
        Self::new(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Spatial mean `(1/m) sum_j values[j]`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.grid.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Spectral derivative; exact for trigonometric polynomials of degree
    /// at most `m/2 - 1`.
    pub fn derivative(&self) -> ScalarField {
        Spectrum::from_field(self).derivative().to_field()
    }

    /// Discrete Sobolev norm `(sum_n (1 + n^2)^s |u_hat(n)|^2)^(1/2)` over
    /// every resolved wavenumber (Nyquist included, so `s = 0` is exactly
    /// the discrete L2 norm).
    pub fn hs_norm(&self, s: u32) -> f64 {
        let coeffs = dft(&self.values);
        let m = self.grid.len() as i64;
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let k = k as i64;
                let n = if k <= m / 2 { k } else { k - m };
                let w = 1.0 + (n * n) as f64;
                w.powi(s as i32) * c.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.hs_norm(0)
    }

    /// Monotone periodic cubic evaluation at any real `x` (wrapped into `[0,1)`).
    pub fn interp_eval(&self, x: f64) -> f64 {
        MonotoneCubic::new(self).eval(x)
    }

    /// Rigid periodic shift by an integer number of cells:
    /// `out[j] = values[j - k]`.
    pub fn roll(&self, k: i64) -> ScalarField {
        let m = self.grid.len();
        let values = (0..m)
            .map(|j| self.values[self.grid.wrap(j as i64 - k)])
            .collect();
        Self::from_raw(self.grid, values)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Discrete L2 distance `((1/m) sum (a - b)^2)^(1/2)`.
    pub fn l2_distance(&self, other: &ScalarField) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s / self.grid.len() as f64).sqrt()
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self::from_raw(self.grid, values)
    }

    /// `x,value` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (x, v) in self.grid.points().zip(&self.values) {
            let _ = writeln!(out, "{x:.16e},{v:.16e}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_sizes() {
        let g = PeriodicGrid::new(8).unwrap();
        assert_eq!(g.dx(), 0.125);
        assert_eq!(g.point(3), 0.375);
        assert_eq!(PeriodicGrid::new(7), Err(FieldError::InvalidGridSize(7)));
        assert_eq!(PeriodicGrid::new(4), Err(FieldError::InvalidGridSize(4)));
        let g = PeriodicGrid::new(256).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(g.point(255), 0.99609375);
        assert_eq!(g.point(0), 0.0);
    }

    #[test]
    fn sampling() {
        let g = PeriodicGrid::new(8).unwrap();
        let z = ScalarField::sample(g, |_| 0.0).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let s = ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap();
        assert_eq!(s.values()[2], 1.0);
        match ScalarField::sample(g, |x| 1.0 / x) {
            Err(FieldError::NonFiniteSample { x, .. }) => assert_eq!(x, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn derivatives_of_trig_polynomials() {
        let g = PeriodicGrid::new(64).unwrap();
        let c = ScalarField::constant(g, 2.5).derivative();
        assert!(c.sup_norm() < 1e-12);

        let f = ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap();
        let want = ScalarField::sample(g, |x| 2.0 * PI * (2.0 * PI * x).cos()).unwrap();
        assert!(f.derivative().max_abs_diff(&want) < 1e-12);

        let f = ScalarField::sample(g, |x| (2.0 * PI * x).sin() + (4.0 * PI * x).cos()).unwrap();
        let want = ScalarField::sample(g, |x| {
            2.0 * PI * (2.0 * PI * x).cos() - 4.0 * PI * (4.0 * PI * x).sin()
        })
        .unwrap();
        assert!(f.derivative().max_abs_diff(&want) < 1e-12);

        // top retained mode
        let k = g.max_mode() as f64;
        let f = ScalarField::sample(g, |x| (2.0 * PI * k * x).cos()).unwrap();
        let want = ScalarField::sample(g, |x| -2.0 * PI * k * (2.0 * PI * k * x).sin()).unwrap();
        assert!(f.derivative().max_abs_diff(&want) < 1e-10);
    }

    /// Brute-force DFT sum, independent of the FFT path.
    fn brute_hs(values: &[f64], s: u32) -> f64 {
        let m = values.len();
        let mut total = 0.0;
        for n in -(m as i64 / 2)..(m as i64 / 2) {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                let a = -2.0 * PI * n as f64 * j as f64 / m as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            re /= m as f64;
            im /= m as f64;
            total += (1.0 + (n * n) as f64).powi(s as i32) * (re * re + im * im);
        }
        total.sqrt()
    }

    #[test]
    fn sobolev_norms() {
        let g = PeriodicGrid::new(32).unwrap();
        let z = ScalarField::zeros(g);
        for s in 0..=8 {
            assert_eq!(z.hs_norm(s), 0.0);
        }
        let f = ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap();
        assert!((f.hs_norm(0) - 0.5_f64.sqrt()).abs() < 1e-14);
        // (1 + 1^2) * (|1/2i|^2 + |1/2i|^2) = 1
        assert!((f.hs_norm(1) - brute_hs(f.values(), 1)).abs() < 1e-13);
        assert!((f.hs_norm(1) - 1.0).abs() < 1e-13);

        let g = ScalarField::sample(g, |x| (x * 7.0).sin() + x * x).unwrap();
        for s in [0, 2, 3] {
            let a = g.hs_norm(s);
            let b = brute_hs(g.values(), s);
            assert!((a - b).abs() < 1e-11 * b, "s={s}: {a} vs {b}");
        }
    }

    #[test]
    fn means() {
        let g = PeriodicGrid::new(64).unwrap();
        assert_eq!(ScalarField::zeros(g).mean(), 0.0);
        let s = ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap();
        assert!(s.mean().abs() < 1e-15);
        assert_eq!(ScalarField::constant(g, 3.5).mean(), 3.5);
    }

    #[test]
    fn csv_rows_round_trip() {
        let g = PeriodicGrid::new(8).unwrap();
        let f = ScalarField::sample(g, |x| (2.0 * PI * x).sin() / 3.0).unwrap();
        let csv = f.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x,value"));
        for (line, v) in lines.zip(f.values()) {
            let parsed: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn roll_shifts_values() {
        let g = PeriodicGrid::new(8).unwrap();
        let f = ScalarField::new(g, (0..8).map(f64::from).collect()).unwrap();
        assert_eq!(f.roll(2).values()[2], 0.0);
        assert_eq!(f.roll(-1).values()[7], 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parseval(vals in proptest::collection::vec(-10.0f64..10.0, 64)) {
                let g = PeriodicGrid::new(64).unwrap();
                let f = ScalarField::new(g, vals.clone()).unwrap();
                let direct: f64 = vals.iter().map(|v| v * v).sum::<f64>() / 64.0;
                let n0 = f.hs_norm(0);
                prop_assert!((n0 * n0 - direct).abs() <= 1e-12 * direct.max(1e-300));
            }

            #[test]
            fn trig_derivative_exact(a in proptest::collection::vec(-1.0f64..1.0, 6),
                                     b in proptest::collection::vec(-1.0f64..1.0, 6)) {
                let g = PeriodicGrid::new(32).unwrap();
                let f = ScalarField::sample(g, |x| (1..=6).map(|n| {
                    let w = 2.0 * PI * n as f64;
                    a[n - 1] * (w * x).sin() + b[n - 1] * (w * x).cos()
                }).sum()).unwrap();
                let want = ScalarField::sample(g, |x| (1..=6).map(|n| {
                    let w = 2.0 * PI * n as f64;
                    w * (a[n - 1] * (w * x).cos() - b[n - 1] * (w * x).sin())
                }).sum()).unwrap();
                prop_assert!(f.derivative().max_abs_diff(&want) < 1e-12);
            }
        }
    }
}
