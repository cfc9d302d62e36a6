//! The N-copy stochastic-Lagrangian particle system.
//!
//! Each copy carries a flow `X^i` started from the identity at the last
//! reset and its inverse `A^i`. The velocity is the empirical mean
//! `u = (1/N) sum_i anchor o A^i`, where `anchor` is the velocity frozen at
//! the last reset. In reset mode the maps return to the identity every
//! `delta_t` with `anchor <- u`; in no-reset mode the anchor stays `u_0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{integer_ratio, ConfigError, InitialData};
use crate::fields::{MonotoneCubic, PeriodicGrid, ScalarField, Spectrum};
use crate::flow_maps::{CircleDiffeo, FlowError, InverseMap};
use crate::noise::{NoiseDriver, StreamChecksum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    #[error("shock at t = {t}: copy {copy} has min Jacobian {min_jacobian}")]
    ShockDetected { t: f64, copy: usize, min_jacobian: f64 },
    #[error("step would cross the reset boundary at t = {boundary}")]
    PastResetBoundary { boundary: f64 },
    #[error("driver has {driver} copies, ensemble has {ensemble}")]
    DriverMismatch { driver: usize, ensemble: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_copies: usize,
    pub nu: f64,
    pub m: usize,
    pub h: f64,
    /// Reset interval; `None` runs without resets.
    pub delta_t: Option<f64>,
    pub t_final: f64,
    pub seed: u64,
    pub eps_jac: f64,
    pub initial: InitialData,
    /// `false` freezes the drift, leaving pure noise transport.
    pub drift: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_copies: 8,
            nu: crate::DEFAULT_NU,
            m: 512,
            h: 1e-4,
            delta_t: Some(0.025),
            t_final: 1.0,
            seed: 0,
            eps_jac: crate::DEFAULT_EPS_JAC,
            initial: InitialData::default(),
            drift: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        PeriodicGrid::new(self.m).map_err(|e| ConfigError::validation("grid.m", e.to_string()))?;
        if self.n_copies == 0 {
            return Err(ConfigError::validation("ensemble.n_copies", "must be at least 1"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(ConfigError::validation("ensemble.nu", "must be positive"));
        }
        if !(self.eps_jac > 0.0 && self.eps_jac < 1.0) {
            return Err(ConfigError::validation("ensemble.eps_jac", "must lie in (0, 1)"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(ConfigError::validation("time.h", "must be positive"));
        }
        if integer_ratio(self.t_final, self.h).is_none() {
            return Err(ConfigError::validation(
                "time.t_final",
                format!("{} is not a positive integer multiple of h = {}", self.t_final, self.h),
            ));
        }
        if let Some(dt) = self.delta_t {
            if integer_ratio(dt, self.h).is_none() {
                return Err(ConfigError::validation(
                    "time.delta_t",
                    format!("{dt} is not a positive integer multiple of h = {}", self.h),
                ));
            }
            if dt < self.t_final && integer_ratio(self.t_final, dt).is_none() {
                return Err(ConfigError::validation(
                    "time.t_final",
                    format!("{} is not an integer multiple of delta_t = {dt}", self.t_final),
                ));
            }
        }
        self.initial
            .sample(self.grid())
            .map_err(|e| ConfigError::validation("initial_data", e.to_string()))?;
        Ok(())
    }

    pub fn grid(&self) -> PeriodicGrid {
        PeriodicGrid::new(self.m).expect("validated grid size")
    }

    pub fn total_steps(&self) -> u64 {
        integer_ratio(self.t_final, self.h).expect("validated horizon")
    }

    /// Steps per reset epoch; `None` in no-reset mode.
    pub fn steps_per_reset(&self) -> Option<u64> {
        self.delta_t.map(|dt| integer_ratio(dt, self.h).expect("validated reset interval"))
    }

    pub fn driver(&self) -> NoiseDriver {
        NoiseDriver::new(self.seed, self.n_copies, self.h).expect("validated driver config")
    }
}

/// Per-step diagnostics: `t,l2,mass,min_jac,c1,h2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub l2: f64,
    pub mass: f64,
    /// Minimum over copies of each map's minimum Jacobian.
    pub min_jac: f64,
    /// Spectral `max |d_x u|`.
    pub c1: f64,
    pub h2: f64,
}

impl DiagnosticRecord {
    pub fn measure(t: f64, u: &ScalarField, min_jac: f64) -> Self {
        let spec = Spectrum::from_field(u);
        Self {
            t,
            l2: u.l2_norm(),
            mass: u.mean(),
            min_jac,
            c1: spec.derivative().to_field().sup_norm(),
            h2: u.hs_norm(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Completed(f64),
    Shock(f64),
}

impl StopReason {
    pub fn is_shock(&self) -> bool {
        matches!(self, StopReason::Shock(_))
    }

    pub fn time(&self) -> f64 {
        match *self {
            StopReason::Completed(t) | StopReason::Shock(t) => t,
        }
    }
}

/// How much of the trajectory [`run_with`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recording {
    /// A diagnostic record after every step.
    EveryStep,
    /// Only the final state; used inside Monte Carlo loops.
    FinalOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub stop: StopReason,
    pub series: Vec<DiagnosticRecord>,
    /// Velocity at the stopping time (the last classical state on a shock).
    pub final_u: ScalarField,
    pub epochs: u64,
    /// Digest of every consumed per-copy increment, step-major.
    pub noise_checksum: u64,
}

impl RunReport {
    pub fn series_csv(&self) -> String {
        let mut out = String::from("t,l2,mass,min_jac,c1,h2\n");
        for r in &self.series {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.t, r.l2, r.mass, r.min_jac, r.c1, r.h2
            ));
        }
        out
    }
}

/// `values[j] = (1/N) sum_i anchor(A^i(x_j))`.
pub fn reconstruct(anchor: &ScalarField, inverses: &[InverseMap]) -> ScalarField {
    reconstruct_with(&MonotoneCubic::new(anchor), inverses)
}

fn reconstruct_with(anchor: &MonotoneCubic, inverses: &[InverseMap]) -> ScalarField {
    let grid = anchor.grid();
    let m = grid.len();
    let scale = m as f64;
    let inv_n = 1.0 / inverses.len() as f64;
    let mut values = vec![0.0; m];
    values.par_chunks_mut(64).enumerate().for_each(|(chunk, out)| {
        for (k, slot) in out.iter_mut().enumerate() {
            let j = chunk * 64 + k;
            let mut s = 0.0;
            for a in inverses {
                s += anchor.eval_offset(j, a.displacement()[j] * scale);
            }
            *slot = s * inv_n;
        }
    });
    ScalarField::new(grid, values).expect("interpolated values are finite")
}

/// Closed-form pure-noise evolution over `steps` base steps from `step0`:
/// `(1/N) sum_j f(x - sqrt(2 nu) (W^j(step0 + steps) - W^j(step0)))`.
pub fn split_reset_oracle(f: &ScalarField, driver: &NoiseDriver, nu: f64, step0: u64, steps: u64) -> ScalarField {
    let sigma = (2.0 * nu).sqrt();
    let shifts: Vec<f64> = (0..driver.n_copies())
        .map(|c| {
            // same summation order as the stepped maps
            let mut lam = 0.0;
            for dw in driver.copy_path(c, step0..step0 + steps) {
                lam += sigma * dw;
            }
            lam
        })
        .collect();
    let interp = MonotoneCubic::new(f);
    let grid = f.grid();
    let inv_n = 1.0 / shifts.len() as f64;
    let values = grid
        .points()
        .map(|x| shifts.iter().map(|s| interp.eval(x - s)).sum::<f64>() * inv_n)
        .collect();
    ScalarField::new(grid, values).expect("finite")
}

#[derive(Debug, Clone)]
pub struct EnsembleState {
    grid: PeriodicGrid,
    nu: f64,
    sigma: f64,
    h: f64,
    eps_jac: f64,
    drift: bool,
    /// Global step counter; `t = step * h`.
    step: u64,
    epoch: u64,
    epoch_start: u64,
    anchor: ScalarField,
    anchor_interp: MonotoneCubic,
    maps: Vec<CircleDiffeo>,
    inverses: Vec<InverseMap>,
    u: ScalarField,
    checksum: StreamChecksum,
    scratch: Vec<f64>,
}

impl EnsembleState {
    pub fn new(u0: ScalarField, n_copies: usize, nu: f64, h: f64, eps_jac: f64, drift: bool) -> Self {
        let grid = u0.grid();
        Self {
            grid,
            nu,
            sigma: (2.0 * nu).sqrt(),
            h,
            eps_jac,
            drift,
            step: 0,
            epoch: 0,
            epoch_start: 0,
            anchor_interp: MonotoneCubic::new(&u0),
            anchor: u0.clone(),
            maps: vec![CircleDiffeo::identity(grid); n_copies],
            inverses: vec![InverseMap::identity(grid); n_copies],
            u: u0,
            checksum: StreamChecksum::default(),
            scratch: vec![0.0; n_copies],
        }
    }

    pub fn from_config(config: &RunConfig) -> Result<Self, ParticleError> {
        config.validate()?;
        let u0 = config.initial.sample(config.grid()).expect("validated initial data");
        Ok(Self::new(u0, config.n_copies, config.nu, config.h, config.eps_jac, config.drift))
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.h
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn steps_in_epoch(&self) -> u64 {
        self.step - self.epoch_start
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn anchor(&self) -> &ScalarField {
        &self.anchor
    }

    pub fn maps(&self) -> &[CircleDiffeo] {
        &self.maps
    }

    pub fn inverses(&self) -> &[InverseMap] {
        &self.inverses
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn noise_checksum(&self) -> u64 {
        self.checksum.digest()
    }

    pub fn min_jacobian(&self) -> f64 {
        self.maps
            .iter()
            .map(CircleDiffeo::min_jacobian)
            .fold(f64::INFINITY, f64::min)
    }

    /// Advance every map by one Euler–Maruyama step with the current `u`,
    /// re-invert and re-reconstruct. On a shock the maps are left advanced
    /// (so [`Self::min_jacobian`] reports the failing value) while `u` and
    /// `t` keep their last classical values.
    pub fn step(&mut self, driver: &NoiseDriver) -> Result<(), ParticleError> {
        if driver.n_copies() != self.maps.len() {
            return Err(ParticleError::DriverMismatch {
                driver: driver.n_copies(),
                ensemble: self.maps.len(),
            });
        }
        driver.fill_increments(self.step, &mut self.scratch);
        for &dw in &self.scratch {
            self.checksum.absorb(dw);
        }
        let sigma = self.sigma;
        let h = self.h;
        let eps = self.eps_jac;
        let u_interp = self.drift.then(|| MonotoneCubic::new(&self.u));
        let results: Vec<Result<InverseMap, FlowError>> = self
            .maps
            .par_iter_mut()
            .zip(self.scratch.par_iter())
            .map(|(map, &dw)| {
                match &u_interp {
                    Some(p) => map.advance(p, h, sigma * dw),
                    None => map.rotate(sigma * dw),
                }
                map.invert(eps)
            })
            .collect();
        let mut inverses = Vec::with_capacity(results.len());
        for (copy, r) in results.into_iter().enumerate() {
            match r {
                Ok(a) => inverses.push(a),
                Err(FlowError::NearSingularMap { min_jacobian, .. }) => {
                    return Err(ParticleError::ShockDetected {
                        t: (self.step + 1) as f64 * self.h,
                        copy,
                        min_jacobian,
                    })
                }
                Err(e) => return Err(e.into()),
            }
        }
        self.inverses = inverses;
        self.u = reconstruct_with(&self.anchor_interp, &self.inverses);
        self.step += 1;
        Ok(())
    }

    /// `anchor <- u`, maps back to the identity, epoch counter advanced.
    pub fn reset(&mut self) {
        self.anchor = self.u.clone();
        self.anchor_interp = MonotoneCubic::new(&self.anchor);
        for m in &mut self.maps {
            *m = CircleDiffeo::identity(self.grid);
        }
        for a in &mut self.inverses {
            *a = InverseMap::identity(self.grid);
        }
        self.epoch += 1;
        self.epoch_start = self.step;
    }

    /// Step with a guard against crossing a reset boundary every
    /// `steps_per_reset` steps.
    pub fn step_within_epoch(&mut self, driver: &NoiseDriver, steps_per_reset: u64) -> Result<(), ParticleError> {
        if self.steps_in_epoch() >= steps_per_reset {
            return Err(ParticleError::PastResetBoundary {
                boundary: (self.epoch_start + steps_per_reset) as f64 * self.h,
            });
        }
        self.step(driver)
    }
}

pub fn run(config: &RunConfig, driver: &NoiseDriver) -> Result<RunReport, ParticleError> {
    run_with(config, driver, Recording::EveryStep)
}

/// Step to `t_final` or the first shock, resetting every `delta_t`.
pub fn run_with(config: &RunConfig, driver: &NoiseDriver, recording: Recording) -> Result<RunReport, ParticleError> {
    let mut state = EnsembleState::from_config(config)?;
    let total = config.total_steps();
    let per_reset = config.steps_per_reset().unwrap_or(u64::MAX);
    let mut series = Vec::new();
    if recording == Recording::EveryStep {
        series.push(DiagnosticRecord::measure(0.0, state.u(), 1.0));
    }
    let mut stop = StopReason::Completed(config.t_final);
    for _ in 0..total {
        if state.steps_in_epoch() == per_reset {
            state.reset();
        }
        match state.step(driver) {
            Ok(()) => {
                if recording == Recording::EveryStep {
                    series.push(DiagnosticRecord::measure(state.t(), state.u(), state.min_jacobian()));
                }
            }
            Err(ParticleError::ShockDetected { t, min_jacobian, .. }) => {
                let mut rec = DiagnosticRecord::measure(t, state.u(), state.min_jacobian());
                rec.min_jac = rec.min_jac.min(min_jacobian);
                series.push(rec);
                stop = StopReason::Shock(t);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if recording == Recording::FinalOnly && !stop.is_shock() {
        series.push(DiagnosticRecord::measure(state.t(), state.u(), state.min_jacobian()));
    }
    Ok(RunReport {
        stop,
        series,
        final_u: state.u().clone(),
        epochs: state.epoch() + 1,
        noise_checksum: state.noise_checksum(),
    })
}
