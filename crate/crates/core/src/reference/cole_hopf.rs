//! Exact viscous Burgers solutions through the Cole–Hopf transform.
//!
//! With `Phi = int_0^x u_0` and `phi_0 = exp(-Phi / (2 nu))`, the heat
//! equation `phi_t = nu phi_xx` gives `u = -2 nu phi_x / phi`. The Fourier
//! coefficients of `phi_0` come from an FFT of `phi_0` on a fine grid; the
//! heat evolution and the derivative are then applied term by term.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::ReferenceError;
use crate::fields::{dft, PeriodicGrid, ScalarField, Spectrum};

/// Truncation threshold on term magnitude, relative to `phi_hat(0)`.
const TERM_TOL: f64 = 1e-16;

#[derive(Debug, Clone)]
pub struct ColeHopf {
    nu: f64,
    /// `phi_hat_0(n)` for `n = 0, 1, ..`; negative modes are conjugates.
    phi_hat: Vec<Complex64>,
}

impl ColeHopf {
    pub fn new(u0: &ScalarField, nu: f64) -> Result<Self, ReferenceError> {
        let mean = u0.mean();
        if mean.abs() > 1e-12 {
            return Err(ReferenceError::NonZeroMean(mean));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(ReferenceError::InvalidInput(format!("viscosity {nu}")));
        }
        let g = u0.grid();
        let u_hat = Spectrum::from_field(u0);
        let fine = PeriodicGrid::new((4 * g.len()).max(2048)).expect("power of two");
        let mut phi_coeffs = vec![Complex64::new(0.0, 0.0); fine.len()];
        let mut at_zero = 0.0;
        for n in 1..=g.max_mode() {
            let c = u_hat.coeff(n as i64) / Complex64::new(0.0, 2.0 * PI * n as f64);
            phi_coeffs[n] = c;
            at_zero += 2.0 * c.re;
        }
        // choose the constant so that Phi(0) = 0
        phi_coeffs[0] = Complex64::new(-at_zero, 0.0);
        let potential = Spectrum::from_coeffs(fine, phi_coeffs).to_field();
        let phi0: Vec<f64> = potential
            .values()
            .iter()
            .map(|p| (-p / (2.0 * nu)).exp())
            .collect();
        let coeffs = dft(&phi0);
        let phi_hat = coeffs[..fine.len() / 2].to_vec();
        Ok(Self { nu, phi_hat })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Fourier coefficient `phi_hat_0(n)`, `n >= 0`.
    pub fn potential_coeff(&self, n: usize) -> Complex64 {
        self.phi_hat.get(n).copied().unwrap_or_default()
    }

    /// `u(t, x)` for `t >= 0`.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let nu = self.nu;
        let c0 = self.phi_hat[0].re;
        let mut den = c0;
        let mut num = 0.0;
        let mut quiet = 0;
        for (n, c) in self.phi_hat.iter().enumerate().skip(1) {
            let k = 2.0 * PI * n as f64;
            let decay = (-k * k * nu * t).exp();
            let mag = c.norm() * decay;
            if mag * (1.0 + k) < TERM_TOL * c0.abs() {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
                continue;
            }
            quiet = 0;
            let e = Complex64::from_polar(1.0, k * x);
            let term = c * e * decay;
            den += 2.0 * term.re;
            // Re(i k term) = -k Im(term)
            num += -2.0 * k * term.im;
        }
        -2.0 * nu * num / den
    }

    pub fn sample(&self, t: f64, grid: PeriodicGrid) -> ScalarField {
        let values = grid.points().map(|x| self.eval(t, x)).collect();
        ScalarField::new(grid, values).expect("finite Cole-Hopf values")
    }
}

/// `u(t, x)` of viscous Burgers from mean-zero data `u0`.
pub fn cole_hopf(u0: &ScalarField, nu: f64, t: f64, x: f64) -> Result<f64, ReferenceError> {
    if !(t >= 0.0) {
        return Err(ReferenceError::InvalidInput(format!("time {t}")));
    }
    Ok(ColeHopf::new(u0, nu)?.eval(t, x))
}
