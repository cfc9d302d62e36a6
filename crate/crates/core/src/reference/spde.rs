//! The limiting common-noise SPDE
//! `dv + v v_x dt = nu v_xx dt - sqrt(2 nu) v_x dxi`, `xi = (1/N) sum_j W^j`.
//!
//! The transport noise is spatially uniform, so over one step it is the
//! rigid shift `x -> x - sqrt(2 nu) dxi`, applied here as an exact phase
//! rotation. Writing the Itô equation in that form moves its correction
//! `nu/N v_xx` into the shift, leaving diffusion `nu (1 - 1/N)`; the
//! integrator is therefore an integrating-factor Euler step of Burgers with
//! that reduced viscosity followed by the shift. [`ito_euler_path`]
//! integrates the equation literally as an independent check.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::burgers::{burgers_solve, cfl_number, diffusion_factors};
use super::ReferenceError;
use crate::fields::{PeriodicGrid, ScalarField, Spectrum};
use crate::noise::{NoiseDriver, StreamChecksum};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub spectrum: Spectrum,
    pub t: f64,
}

impl SpectralState {
    pub fn new(u0: &ScalarField) -> Self {
        let mut spectrum = Spectrum::from_field(u0);
        spectrum.dealias();
        Self { spectrum, t: 0.0 }
    }

    /// `||v||^2`.
    pub fn energy(&self) -> f64 {
        self.spectrum.weighted_energy(0)
    }

    /// `||v_x||^2`.
    pub fn dissipation(&self) -> f64 {
        self.spectrum.weighted_energy(1)
    }

    pub fn field(&self) -> ScalarField {
        self.spectrum.to_field()
    }
}

#[derive(Debug, Clone)]
pub struct SpdeSolver {
    grid: PeriodicGrid,
    sigma: f64,
    nu_eff: f64,
    dt: f64,
    factors: Vec<f64>,
    nonlinear: bool,
}

impl SpdeSolver {
    /// Solver for `N` copies: diffusion `nu (1 - 1/N)`, shift `sqrt(2 nu) dxi`.
    pub fn new(grid: PeriodicGrid, nu: f64, n_copies: usize, dt: f64) -> Result<Self, ReferenceError> {
        if n_copies == 0 {
            return Err(ReferenceError::InvalidInput("n_copies must be at least 1".into()));
        }
        Self::with_viscosity(grid, nu, nu * (1.0 - 1.0 / n_copies as f64), dt)
    }

    /// Explicit effective viscosity; `nu_eff = nu` is the `N -> infinity`
    /// limit in which the equation is deterministic Burgers plus a shift.
    pub fn with_viscosity(grid: PeriodicGrid, nu: f64, nu_eff: f64, dt: f64) -> Result<Self, ReferenceError> {
        if !(nu > 0.0 && nu_eff >= 0.0 && dt > 0.0 && dt.is_finite()) {
            return Err(ReferenceError::InvalidInput(format!("nu {nu}, nu_eff {nu_eff}, dt {dt}")));
        }
        Ok(Self {
            grid,
            sigma: (2.0 * nu).sqrt(),
            nu_eff,
            dt,
            factors: diffusion_factors(grid, nu_eff, dt),
            nonlinear: true,
        })
    }

    /// Drop the advection term (linear heat equation with transport noise).
    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn nu_eff(&self) -> f64 {
        self.nu_eff
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &mut SpectralState, dxi: f64) -> Result<(), ReferenceError> {
        let v = &mut state.spectrum;
        if self.nonlinear {
            let (adv, sup) = v.advection_and_sup();
            let number = cfl_number(self.grid, self.dt, sup);
            if !(number < 1.0) {
                return Err(ReferenceError::CflViolation { t: state.t, number });
            }
            v.add_scaled(&adv, self.dt);
        }
        for (c, f) in v.coeffs_mut().iter_mut().zip(&self.factors) {
            *c *= *f;
        }
        if dxi != 0.0 {
            v.shift(self.sigma * dxi);
        }
        state.t += self.dt;
        Ok(())
    }
}

/// Common-noise increments over consecutive blocks of `block` base steps,
/// `n_blocks` blocks from step 0. Every per-copy increment read is absorbed
/// into `checksum` step-major, in the same order the particle system reads
/// them.
pub fn block_increments(driver: &NoiseDriver, block: u64, n_blocks: u64, checksum: &mut StreamChecksum) -> Vec<f64> {
    let n = driver.n_copies();
    let mut buf = vec![0.0; n];
    let mut out = Vec::with_capacity(n_blocks as usize);
    for b in 0..n_blocks {
        let mut sum = 0.0;
        for k in b * block..(b + 1) * block {
            driver.fill_increments(k, &mut buf);
            let mut s = 0.0;
            for &dw in &buf {
                checksum.absorb(dw);
                s += dw;
            }
            sum += s / n as f64;
        }
        out.push(sum);
    }
    out
}

/// Literal Euler–Maruyama for the Itô equation in Fourier space with the
/// full viscosity held in an integrating factor:
/// `v_hat <- e^{-4 pi^2 n^2 nu dt} (v_hat + dt N_hat(v) - 2 pi i n sqrt(2 nu) dxi v_hat)`.
pub fn ito_euler_path(u0: &ScalarField, nu: f64, dt: f64, dxi: &[f64]) -> Result<ScalarField, ReferenceError> {
    let grid = u0.grid();
    let factors = diffusion_factors(grid, nu, dt);
    let sigma = (2.0 * nu).sqrt();
    let mut v = Spectrum::from_field(u0);
    v.dealias();
    for (k, &d) in dxi.iter().enumerate() {
        let (adv, sup) = v.advection_and_sup();
        let number = cfl_number(grid, dt, sup);
        if !(number < 1.0) {
            return Err(ReferenceError::CflViolation { t: k as f64 * dt, number });
        }
        let theta = 2.0 * PI * sigma * d;
        for i in 0..grid.len() {
            let n = v.wavenumber(i) as f64;
            let c = v.coeffs()[i];
            let noise = Complex64::new(0.0, -theta * n) * c;
            v.coeffs_mut()[i] = (c + adv.coeffs()[i] * dt + noise) * factors[i];
        }
    }
    Ok(v.to_field())
}

/// `v_t(x) = w(t, x - sqrt(2 nu) xi_t)` with `w` deterministic Burgers at
/// viscosity `nu (1 - 1/N)`, solved by fourth-order integrating-factor RK with
/// step `dt`.
pub fn spde_v_shift_oracle(
    u0: &ScalarField,
    nu: f64,
    n_copies: usize,
    xi_t: f64,
    t: f64,
    dt: f64,
) -> Result<ScalarField, ReferenceError> {
    let nu_eff = nu * (1.0 - 1.0 / n_copies as f64);
    let w = if t == 0.0 {
        u0.clone()
    } else {
        burgers_solve(u0, nu_eff, t, dt, &[])?.last().clone()
    };
    let mut s = Spectrum::from_field(&w);
    s.shift((2.0 * nu).sqrt() * xi_t);
    Ok(s.to_field())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::BurgersSolver;

    fn grid(m: usize) -> PeriodicGrid {
        PeriodicGrid::new(m).unwrap()
    }

    fn sin_field(g: PeriodicGrid) -> ScalarField {
        ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap()
    }

    #[test]
    fn constants_are_invariant() {
        let g = grid(32);
        let s = SpdeSolver::new(g, 0.5, 2, 1e-3).unwrap();
        let mut st = SpectralState::new(&ScalarField::constant(g, 1.3));
        for k in 0..50 {
            s.step(&mut st, 0.01 * (k as f64).sin()).unwrap();
        }
        assert!(st.field().values().iter().all(|v| (v - 1.3).abs() < 1e-14));
        let o = spde_v_shift_oracle(&ScalarField::constant(g, 1.3), 0.5, 2, 0.42, 0.1, 1e-3).unwrap();
        assert!(o.values().iter().all(|v| (v - 1.3).abs() < 1e-14));
    }

    #[test]
    fn zero_noise_infinite_n_is_deterministic_burgers() {
        let g = grid(64);
        let dt = 1e-4;
        let s = SpdeSolver::with_viscosity(g, 0.5, 0.5, dt).unwrap();
        let mut st = SpectralState::new(&sin_field(g));
        for _ in 0..1000 {
            s.step(&mut st, 0.0).unwrap();
        }
        let exact = burgers_solve(&sin_field(g), 0.5, 0.1, dt, &[]).unwrap();
        // first-order splitting against fourth-order reference
        assert!(st.field().max_abs_diff(exact.last()) < 1e-4);
        let o = spde_v_shift_oracle(&sin_field(g), 0.5, usize::MAX, 0.0, 0.1, dt).unwrap();
        assert!(o.max_abs_diff(exact.last()) < 1e-12);
        let _ = BurgersSolver::new(g, 0.5, dt).unwrap();
    }

    #[test]
    fn first_order_against_shift_oracle() {
        let g = grid(64);
        let (n, t) = (2, 0.25);
        let driver = NoiseDriver::new(5, n, 1.0 / 4096.0).unwrap();
        let fine = 1024u64;
        let mut sum = StreamChecksum::default();
        let xi: f64 = block_increments(&driver, 1, fine, &mut sum).iter().sum();
        let oracle = spde_v_shift_oracle(&sin_field(g), 0.5, n, xi, t, 1.0 / 4096.0).unwrap();
        let errs: Vec<f64> = [4u64, 8, 16]
            .iter()
            .map(|&q| {
                let dt = q as f64 / 4096.0;
                let s = SpdeSolver::new(g, 0.5, n, dt).unwrap();
                let incs = block_increments(&driver, q, fine / q, &mut StreamChecksum::default());
                let mut st = SpectralState::new(&sin_field(g));
                for d in incs {
                    s.step(&mut st, d).unwrap();
                }
                st.field().l2_distance(&oracle)
            })
            .collect();
        let order = (errs[2] / errs[0]).log2() / 2.0;
        assert!(order >= 0.9, "{errs:?} order {order}");
    }

    #[test]
    fn block_increments_sum_exactly() {
        let d = NoiseDriver::new(9, 3, 1e-3).unwrap();
        let mut a = StreamChecksum::default();
        let mut b = StreamChecksum::default();
        let one = block_increments(&d, 1, 8, &mut a);
        let two = block_increments(&d, 2, 4, &mut b);
        assert_eq!(a, b);
        for i in 0..4 {
            assert!((one[2 * i] + one[2 * i + 1] - two[i]).abs() < 1e-16);
        }
        assert!((one.iter().sum::<f64>() - d.aggregate(0..8)).abs() < 1e-15);
    }

    #[test]
    fn energy_law_per_step() {
        let g = grid(128);
        let dt = 1e-4;
        for n in [2usize, 8] {
            let s = SpdeSolver::new(g, 0.5, n, dt).unwrap();
            let d = NoiseDriver::new(1, n, dt).unwrap();
            let incs = block_increments(&d, 1, 500, &mut StreamChecksum::default());
            let u0 = ScalarField::sample(g, |x| (2.0 * PI * x).sin() + 0.5 * (4.0 * PI * x).cos()).unwrap();
            let mut st = SpectralState::new(&u0);
            for dxi in incs {
                let (e0, d0) = (st.energy(), st.dissipation());
                s.step(&mut st, dxi).unwrap();
                let (e1, d1) = (st.energy(), st.dissipation());
                let residual = (e1 - e0) + (1.0 - 1.0 / n as f64) * 0.5 * (d0 + d1) * dt;
                assert!(residual.abs() < 50.0 * dt * dt * d0.max(1.0), "{residual:e}");
                assert!(e1.sqrt() <= e0.sqrt() + 1e-10);
            }
        }
    }

    #[test]
    fn sobolev_norms_stay_bounded() {
        let g = grid(64);
        let dt = 1e-3;
        let s = SpdeSolver::new(g, 0.5, 2, dt).unwrap();
        let d = NoiseDriver::new(4, 2, dt).unwrap();
        let u0 = ScalarField::sample(g, |x| (2.0 * PI * x).sin() + 0.5 * (4.0 * PI * x).cos()).unwrap();
        let mut st = SpectralState::new(&u0);
        let start: Vec<f64> = (1..=3).map(|k| st.spectrum.hs_norm(k)).collect();
        let mut sup = start.clone();
        for dxi in block_increments(&d, 1, 5000, &mut StreamChecksum::default()) {
            s.step(&mut st, dxi).unwrap();
            for (k, v) in sup.iter_mut().enumerate() {
                *v = v.max(st.spectrum.hs_norm(k as u32 + 1));
            }
        }
        for k in 0..3 {
            assert!(sup[k].is_finite() && sup[k] <= 10.0 * start[k], "s = {}: {} vs {}", k + 1, sup[k], start[k]);
        }
    }
}
