//! Monte Carlo experiment drivers.
//!
//! Every realization `r` of an experiment draws its noise from
//! `NoiseDriver::new(mix_seed(seed, r), N, h)`, so tables are pure functions
//! of the spec and the master seed. Realizations run in parallel and are
//! reduced in index order.

mod fit;
mod rates;
mod shocks;
mod spde_diag;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit_loglog, RateFit};
pub use rates::{exp_rate_dt, exp_rate_n, RateDtResult, RateDtRow, RateNResult, RateNRow};
pub use shocks::{exp_shock_census, exp_survival, CensusResult, CensusSummary, SurvivalResult, SurvivalRow};
pub use spde_diag::{exp_energy_law, exp_spectral_decay, EnergyLawResult, EnergySummary, SpectralDecayResult};

use crate::config::{integer_ratio, ConfigError, InitialData};
use crate::output::Table;
use crate::particle::{ParticleError, RunConfig};
use crate::reference::ReferenceError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("only {survivors} of {realizations} realizations survived at delta_t = {delta_t} (need at least half)")]
    InsufficientSurvivors {
        delta_t: f64,
        survivors: usize,
        realizations: usize,
    },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("coupling broken in realization {0}: particle and SPDE consumed different increments")]
    CouplingMismatch(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Particle(#[from] ParticleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    RateDt,
    RateN,
    ShockCensus,
    Survival,
    EnergyLaw,
    SpectralDecay,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::RateDt,
        ExperimentId::RateN,
        ExperimentId::ShockCensus,
        ExperimentId::Survival,
        ExperimentId::EnergyLaw,
        ExperimentId::SpectralDecay,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::RateDt => "rate_dt",
            ExperimentId::RateN => "rate_n",
            ExperimentId::ShockCensus => "shock_census",
            ExperimentId::Survival => "survival",
            ExperimentId::EnergyLaw => "energy_law",
            ExperimentId::SpectralDecay => "spectral_decay",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ExperimentId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentId::ALL.iter().map(|i| i.name()).collect();
                format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub base: RunConfig,
    pub realizations: usize,
    /// Reset intervals, strictly decreasing (rate_dt, survival). For
    /// rate_n the first entry is the sampling interval.
    pub delta_t_list: Vec<f64>,
    /// Copy counts, strictly increasing (rate_n, shock_census, energy_law).
    pub n_list: Vec<usize>,
    /// Shock thresholds for the census sensitivity sweep.
    pub eps_jac_list: Vec<f64>,
    /// Share one driver between the particle system and the SPDE.
    pub coupled: bool,
    /// SPDE time step; a multiple of `base.h`.
    pub spde_dt: f64,
}

const H_FINE: f64 = 1.0 / 4096.0;

impl ExperimentSpec {
    /// Desk-scale defaults for each experiment.
    pub fn preset(id: ExperimentId) -> Self {
        let sincos = InitialData::SinCos { a: 1.0, b: 0.5 };
        let base = RunConfig::default();
        match id {
            ExperimentId::RateDt => Self {
                id,
                base: RunConfig {
                    n_copies: 4,
                    m: 256,
                    h: H_FINE,
                    t_final: 0.5,
                    delta_t: None,
                    initial: sincos,
                    seed: 2024,
                    ..base
                },
                realizations: 64,
                delta_t_list: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
                n_list: vec![4],
                eps_jac_list: vec![],
                coupled: true,
                spde_dt: H_FINE,
            },
            ExperimentId::RateN => Self {
                id,
                base: RunConfig {
                    n_copies: 2,
                    m: 256,
                    h: H_FINE,
                    t_final: 0.5,
                    delta_t: None,
                    initial: sincos,
                    seed: 2025,
                    ..base
                },
                realizations: 64,
                delta_t_list: vec![1.0 / 16.0],
                n_list: vec![2, 4, 8, 16, 32],
                eps_jac_list: vec![],
                coupled: true,
                spde_dt: H_FINE,
            },
            ExperimentId::ShockCensus => Self {
                id,
                base: RunConfig {
                    n_copies: 2,
                    m: 256,
                    h: 5e-4,
                    t_final: 1.5,
                    delta_t: None,
                    initial: InitialData::MinusSin(1.0),
                    seed: 2026,
                    ..base
                },
                realizations: 100,
                delta_t_list: vec![],
                n_list: vec![2, 4, 8],
                eps_jac_list: vec![1e-2, 1e-3, 1e-4],
                coupled: false,
                spde_dt: 5e-4,
            },
            ExperimentId::Survival => Self {
                id,
                base: RunConfig {
                    n_copies: 8,
                    m: 128,
                    h: 1e-3,
                    t_final: 1.0,
                    delta_t: None,
                    initial: InitialData::MinusSin(1.0),
                    seed: 2027,
                    ..base
                },
                realizations: 200,
                delta_t_list: vec![0.2, 0.1, 0.05, 0.025],
                n_list: vec![8],
                eps_jac_list: vec![],
                coupled: false,
                spde_dt: 1e-3,
            },
            ExperimentId::EnergyLaw => Self {
                id,
                base: RunConfig {
                    n_copies: 2,
                    m: 256,
                    h: 1e-4,
                    t_final: 1.0,
                    delta_t: None,
                    initial: sincos,
                    seed: 2028,
                    ..base
                },
                realizations: 1,
                delta_t_list: vec![],
                n_list: vec![2, 8],
                eps_jac_list: vec![],
                coupled: true,
                spde_dt: 1e-4,
            },
            ExperimentId::SpectralDecay => Self {
                id,
                base: RunConfig {
                    n_copies: 4,
                    m: 256,
                    h: 1e-4,
                    t_final: 2.0,
                    delta_t: None,
                    initial: sincos,
                    seed: 2029,
                    ..base
                },
                realizations: 1,
                delta_t_list: vec![],
                n_list: vec![4],
                eps_jac_list: vec![],
                coupled: true,
                spde_dt: 1e-4,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut base = self.base.clone();
        base.delta_t = None;
        base.validate()?;
        if self.realizations == 0 {
            return Err(ConfigError::validation("experiment.realizations", "must be at least 1"));
        }
        if matches!(self.id, ExperimentId::RateDt | ExperimentId::RateN) && self.realizations < 16 {
            return Err(ConfigError::validation(
                "experiment.realizations",
                "rate fits need at least 16 realizations",
            ));
        }
        if !self.delta_t_list.windows(2).all(|w| w[0] > w[1]) {
            return Err(ConfigError::validation("experiment.delta_t_list", "must be strictly decreasing"));
        }
        for &dt in &self.delta_t_list {
            if integer_ratio(dt, self.base.h).is_none() {
                return Err(ConfigError::validation(
                    "experiment.delta_t_list",
                    format!("{dt} is not an integer multiple of h = {}", self.base.h),
                ));
            }
            if dt < self.base.t_final && integer_ratio(self.base.t_final, dt).is_none() {
                return Err(ConfigError::validation(
                    "experiment.delta_t_list",
                    format!("t_final = {} is not a multiple of {dt}", self.base.t_final),
                ));
            }
        }
        if self.id == ExperimentId::RateDt && !self.delta_t_list.windows(2).all(|w| integer_ratio(w[0], w[1]).is_some()) {
            return Err(ConfigError::validation("experiment.delta_t_list", "must be dyadic"));
        }
        if !self.n_list.windows(2).all(|w| w[0] < w[1]) || self.n_list.contains(&0) {
            return Err(ConfigError::validation("experiment.n_list", "must be positive and strictly increasing"));
        }
        if integer_ratio(self.spde_dt, self.base.h).is_none() || integer_ratio(self.base.t_final, self.spde_dt).is_none()
        {
            return Err(ConfigError::validation(
                "experiment.spde_dt",
                "must be a multiple of h and divide t_final",
            ));
        }
        if self.eps_jac_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(ConfigError::validation("experiment.eps_jac_list", "entries must lie in (0, 1)"));
        }
        let needs = |field: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::validation(field, format!("required by {}", self.id)))
            }
        };
        match self.id {
            ExperimentId::RateDt | ExperimentId::Survival => needs("experiment.delta_t_list", !self.delta_t_list.is_empty()),
            ExperimentId::RateN => needs(
                "experiment.delta_t_list",
                self.delta_t_list.len() == 1 && integer_ratio(self.delta_t_list[0], self.spde_dt).is_some(),
            )
            .and(needs("experiment.n_list", !self.n_list.is_empty())),
            ExperimentId::ShockCensus | ExperimentId::EnergyLaw => needs("experiment.n_list", !self.n_list.is_empty()),
            ExperimentId::SpectralDecay => Ok(()),
        }
    }
}

/// Tables plus a JSON summary, ready for the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub summary: serde_json::Value,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, ExperimentError> {
    spec.validate()?;
    Ok(match spec.id {
        ExperimentId::RateDt => exp_rate_dt(spec)?.to_output(),
        ExperimentId::RateN => exp_rate_n(spec)?.to_output(),
        ExperimentId::ShockCensus => exp_shock_census(spec)?.to_output(),
        ExperimentId::Survival => exp_survival(spec)?.to_output(),
        ExperimentId::EnergyLaw => exp_energy_law(spec)?.to_output(),
        ExperimentId::SpectralDecay => exp_spectral_decay(spec)?.to_output(),
    })
}

/// Sample mean and standard error of the mean.
pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Linear-interpolated sample quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for id in ExperimentId::ALL {
            ExperimentSpec::preset(id).validate().unwrap_or_else(|e| panic!("{id}: {e}"));
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        }
        assert!("rate-dt".parse::<ExperimentId>().is_ok());
        assert!("bogus".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = ExperimentSpec::preset(ExperimentId::RateDt);
        s.realizations = 8;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::preset(ExperimentId::RateDt);
        s.delta_t_list.reverse();
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::preset(ExperimentId::RateDt);
        s.delta_t_list = vec![0.1];
        assert!(s.validate().is_err());
    }

    #[test]
    fn statistics_helpers() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.25), 1.25);
    }
}
