//! Fourier coefficients with the `e^{2 pi i n x}` convention,
//! `u_hat(n) = (1/m) sum_j u(x_j) e^{-2 pi i n x_j}`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{PeriodicGrid, ScalarField};

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<HashMap<usize, Plans>> = RefCell::new(HashMap::new());
}

fn plans(m: usize) -> Plans {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry(m)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
            })
            .clone()
    })
}

/// Normalised discrete Fourier coefficients in FFT order
/// (index `k` holds wavenumber `k` for `k <= m/2`, `k - m` above).
pub fn dft(values: &[f64]) -> Vec<Complex64> {
    let m = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plans(m).0.process(&mut buf);
    let scale = 1.0 / m as f64;
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

fn idft_real(mut coeffs: Vec<Complex64>) -> Vec<f64> {
    let m = coeffs.len();
    plans(m).1.process(&mut coeffs);
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Fourier coefficients of a real field for `|n| <= m/2 - 1`; the Nyquist
/// slot is held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_field(field: &ScalarField) -> Self {
        let mut coeffs = dft(field.values());
        coeffs[field.grid().len() / 2] = Complex64::new(0.0, 0.0);
        Self {
            grid: field.grid(),
            coeffs,
        }
    }

    /// Build from FFT-ordered coefficients. Nyquist is cleared and the
    /// negative half overwritten so the spectrum is exactly Hermitian.
    pub fn from_coeffs(grid: PeriodicGrid, mut coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.len());
        let m = grid.len();
        coeffs[0].im = 0.0;
        coeffs[m / 2] = Complex64::new(0.0, 0.0);
        for k in 1..m / 2 {
            coeffs[m - k] = coeffs[k].conj();
        }
        Self { grid, coeffs }
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField::from_raw(self.grid, idft_real(self.coeffs.clone()))
    }

    #[inline]
    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Signed wavenumber stored at FFT index `k`.
    #[inline]
    pub fn wavenumber(&self, k: usize) -> i64 {
        let m = self.grid.len();
        if k <= m / 2 {
            k as i64
        } else {
            k as i64 - m as i64
        }
    }

    /// Coefficient of `e^{2 pi i n x}`; zero outside the retained band.
    pub fn coeff(&self, n: i64) -> Complex64 {
        let kmax = self.grid.max_mode() as i64;
        if n.abs() > kmax {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[self.grid.wrap(n)]
    }

    pub fn derivative(&self) -> Spectrum {
        let mut out = self.clone();
        for (k, c) in out.coeffs.iter_mut().enumerate() {
            let n = self.wavenumber(k) as f64;
            *c *= Complex64::new(0.0, 2.0 * PI * n);
        }
        out.coeffs[self.grid.len() / 2] = Complex64::new(0.0, 0.0);
        out
    }

    /// Zero every mode above the 2/3-rule cutoff.
    pub fn dealias(&mut self) {
        let cut = self.grid.dealias_cutoff() as i64;
        for k in 0..self.coeffs.len() {
            if self.wavenumber(k).abs() > cut {
                self.coeffs[k] = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn is_dealiased(&self) -> bool {
        let cut = self.grid.dealias_cutoff() as i64;
        (0..self.coeffs.len())
            .all(|k| self.wavenumber(k).abs() <= cut || self.coeffs[k] == Complex64::new(0.0, 0.0))
    }

    /// Rigid translation `u(x) -> u(x - shift)`, applied as the exact phase
    /// rotation `e^{-2 pi i n shift}`.
    pub fn shift(&mut self, shift: f64) {
        for k in 0..self.coeffs.len() {
            let n = self.wavenumber(k) as f64;
            let phase = Complex64::from_polar(1.0, -2.0 * PI * n * shift);
            self.coeffs[k] *= phase;
        }
    }

    /// `sum_n |c_n|^2 (2 pi n)^(2 p)` : `p = 0` gives `||u||^2`,
    /// `p = 1` gives `||d_x u||^2`.
    pub fn weighted_energy(&self, p: u32) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let w = 2.0 * PI * self.wavenumber(k) as f64;
                w.powi(2 * p as i32) * c.norm_sqr()
            })
            .sum()
    }

    /// `(sum_n (1 + n^2)^s |c_n|^2)^(1/2)` over the stored modes.
    pub fn hs_norm(&self, s: u32) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let n = self.wavenumber(k) as f64;
                (1.0 + n * n).powi(s as i32) * c.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest imaginary part produced by an unsymmetrised inverse
    /// transform; zero up to round-off for Hermitian spectra.
    pub fn max_imag_residual(&self) -> f64 {
        let m = self.grid.len();
        let mut buf = self.coeffs.clone();
        plans(m).1.process(&mut buf);
        buf.iter().fold(0.0_f64, |acc, c| acc.max(c.im.abs()))
    }

    pub fn add_scaled(&mut self, other: &Spectrum, a: f64) {
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o * a;
        }
    }

    /// Pseudo-spectral `-(1/2) d_x (u^2)`, i.e. `-u u_x`, dealiased.
    /// The input is truncated to the 2/3 band before the product so the
    /// quadratic term is alias-free on the retained modes.
    pub fn advection(&self) -> Spectrum {
        self.advection_and_sup().0
    }

    /// [`Self::advection`] together with `max_j |u(x_j)|` of the truncated
    /// field, which CFL checks need anyway.
    pub fn advection_and_sup(&self) -> (Spectrum, f64) {
        let mut trunc = self.clone();
        trunc.dealias();
        let u = trunc.to_field();
        let sup = u.sup_norm();
        let sq: Vec<f64> = u.values().iter().map(|v| 0.5 * v * v).collect();
        let mut out = Spectrum::from_field(&ScalarField::from_raw(self.grid, sq)).derivative();
        for c in out.coeffs.iter_mut() {
            *c = -*c;
        }
        out.dealias();
        (out, sup)
    }

    /// Multiply mode `n` by `f(n)`.
    pub fn scale_modes(&mut self, f: impl Fn(i64) -> Complex64) {
        for k in 0..self.coeffs.len() {
            let n = self.wavenumber(k);
            self.coeffs[k] *= f(n);
        }
    }

    /// Discrete L2 distance between the represented fields.
    pub fn l2_distance(&self, other: &Spectrum) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `n,re,im` rows for `0 <= n <= m/2 - 1`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("n,re,im\n");
        for n in 0..=self.grid.max_mode() as i64 {
            let c = self.coeff(n);
            let _ = writeln!(out, "{n},{:.16e},{:.16e}", c.re, c.im);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> PeriodicGrid {
        PeriodicGrid::new(m).unwrap()
    }

    #[test]
    fn round_trip_and_coefficients() {
        let g = grid(16);
        let f = ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap();
        let s = Spectrum::from_field(&f);
        let c1 = s.coeff(1);
        assert!((c1 - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((s.coeff(-1) - c1.conj()).norm() < 1e-15);
        assert_eq!(s.coeff(9), Complex64::new(0.0, 0.0));
        assert!(s.to_field().max_abs_diff(&f) < 1e-15);
        assert!(s.max_imag_residual() < 1e-12);
    }

    #[test]
    fn shift_is_translation() {
        let g = grid(32);
        let f = ScalarField::sample(g, |x| (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos()).unwrap();
        let mut s = Spectrum::from_field(&f);
        s.shift(0.125);
        assert!(s.to_field().max_abs_diff(&f.roll(4)) < 1e-13);
    }

    #[test]
    fn advection_is_dealiased_and_hermitian() {
        let g = grid(64);
        let f = ScalarField::sample(g, |x| (x * 2.0 * PI).sin().powi(3) + (x * 40.0).cos()).unwrap();
        let a = Spectrum::from_field(&f).advection();
        assert!(a.is_dealiased());
        assert!(a.max_imag_residual() < 1e-12);
    }
}
