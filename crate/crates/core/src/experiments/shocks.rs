//! Shock-time census without resets and survival under resets.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{quantile, ExperimentError, ExperimentOutput, ExperimentSpec};
use crate::config::integer_ratio;
use crate::fields::Spectrum;
use crate::noise::{mix_seed, NoiseDriver};
use crate::output::Table;
use crate::particle::{run_with, EnsembleState, ParticleError, Recording, RunConfig};
use crate::reference::inviscid_shock_time;

/// First time each threshold is reached along one no-reset path.
///
/// One path serves every threshold: without resets the trajectory up to the
/// first crossing of a large threshold does not depend on the smaller ones.
fn first_crossings(
    config: &RunConfig,
    driver: &NoiseDriver,
    thresholds: &[f64],
    steps: u64,
) -> Result<Vec<Option<f64>>, ExperimentError> {
    let eps_min = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let u0 = config.initial.sample(config.grid()).expect("validated initial data");
    let mut state = EnsembleState::new(u0, config.n_copies, config.nu, config.h, eps_min, config.drift);
    let mut out = vec![None; thresholds.len()];
    for _ in 0..steps {
        match state.step(driver) {
            Ok(()) => {
                let j = state.min_jacobian();
                for (o, &e) in out.iter_mut().zip(thresholds) {
                    if o.is_none() && j <= e {
                        *o = Some(state.t());
                    }
                }
            }
            Err(ParticleError::ShockDetected { t, .. }) => {
                for o in out.iter_mut().filter(|o| o.is_none()) {
                    *o = Some(t);
                }
                break;
            }
            Err(e) => return Err(e.into()),
        }
        if out.iter().all(Option::is_some) {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusSummary {
    pub eps_jac: f64,
    pub n_copies: usize,
    /// `N / sup |u_0'|`.
    pub bound: f64,
    pub shocked: usize,
    pub shocked_before_bound: usize,
    pub fraction_before_bound: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// Median over the inviscid shock time of `u_0`.
    pub median_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusResult {
    /// `(eps_jac, N, realization, shock time)`; `None` when no shock occurred
    /// within the horizon.
    pub times: Vec<(f64, usize, usize, Option<f64>)>,
    pub summaries: Vec<CensusSummary>,
    pub inviscid_time: f64,
    pub realizations: usize,
}

impl CensusResult {
    pub fn summaries_for(&self, eps_jac: f64) -> Vec<&CensusSummary> {
        self.summaries.iter().filter(|s| s.eps_jac == eps_jac).collect()
    }

    /// Largest relative spread `max / min - 1` of the medians at one threshold.
    pub fn median_spread(&self, eps_jac: f64) -> f64 {
        let meds: Vec<f64> = self.summaries_for(eps_jac).iter().map(|s| s.median).collect();
        let hi = meds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = meds.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo - 1.0
    }

    pub fn to_output(&self) -> ExperimentOutput {
        let mut times = Table::new("shock_times", &["eps_jac", "n_copies", "realization", "shock_time"]);
        for &(e, n, r, t) in &self.times {
            let cell = match t {
                Some(t) => t.into(),
                None => "none".into(),
            };
            times.push(vec![e.into(), n.into(), r.into(), cell]);
        }
        let mut sum = Table::new(
            "shock_summary",
            &[
                "eps_jac",
                "n_copies",
                "bound",
                "shocked",
                "shocked_before_bound",
                "fraction_before_bound",
                "median",
                "q25",
                "q75",
                "median_over_inviscid",
            ],
        );
        for s in &self.summaries {
            sum.push(vec![
                s.eps_jac.into(),
                s.n_copies.into(),
                s.bound.into(),
                s.shocked.into(),
                s.shocked_before_bound.into(),
                s.fraction_before_bound.into(),
                s.median.into(),
                s.q25.into(),
                s.q75.into(),
                s.median_ratio.into(),
            ]);
        }
        let spreads: Vec<serde_json::Value> = distinct(self.summaries.iter().map(|s| s.eps_jac))
            .into_iter()
            .map(|e| json!({"eps_jac": e, "median_spread": self.median_spread(e)}))
            .collect();
        ExperimentOutput {
            tables: vec![times, sum],
            summary: json!({
                "inviscid_time": self.inviscid_time,
                "realizations": self.realizations,
                "summaries": self.summaries,
                "median_spread": spreads,
            }),
        }
    }
}

fn distinct(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for x in xs {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Shock times without resets for every `N` in `n_list`, each run up to the
/// bound `N / sup |u_0'|` (or `t_final` if later).
pub fn exp_shock_census(spec: &ExperimentSpec) -> Result<CensusResult, ExperimentError> {
    spec.validate()?;
    let base = RunConfig {
        delta_t: None,
        ..spec.base.clone()
    };
    let u0 = base.initial.sample(base.grid()).expect("validated initial data");
    let slope = Spectrum::from_field(&u0).derivative().to_field().sup_norm();
    let inviscid_time = inviscid_shock_time(&u0)?;
    let thresholds: Vec<f64> = if spec.eps_jac_list.is_empty() {
        vec![base.eps_jac]
    } else {
        spec.eps_jac_list.clone()
    };
    let mut times = Vec::new();
    let mut summaries = Vec::new();
    for &n in &spec.n_list {
        let bound = n as f64 / slope;
        let bound_steps = (bound / base.h * (1.0 + 1e-12)).floor() as u64;
        let steps = bound_steps.max(base.total_steps());
        let cfg = RunConfig { n_copies: n, ..base.clone() };
        let per_real: Vec<Result<Vec<Option<f64>>, ExperimentError>> = (0..spec.realizations)
            .into_par_iter()
            .map(|r| {
                let driver = NoiseDriver::new(mix_seed(base.seed, r as u64), n, base.h).expect("validated driver");
                first_crossings(&cfg, &driver, &thresholds, steps)
            })
            .collect();
        let per_real: Vec<Vec<Option<f64>>> = per_real.into_iter().collect::<Result<_, _>>()?;
        for (k, &eps) in thresholds.iter().enumerate() {
            let col: Vec<Option<f64>> = per_real.iter().map(|v| v[k]).collect();
            for (r, t) in col.iter().enumerate() {
                times.push((eps, n, r, *t));
            }
            let mut hit: Vec<f64> = col.iter().flatten().copied().collect();
            hit.sort_by(f64::total_cmp);
            let before = col
                .iter()
                .flatten()
                .filter(|&&t| integer_ratio(t, base.h).is_some_and(|k| k <= bound_steps))
                .count();
            let median = quantile(&hit, 0.5);
            summaries.push(CensusSummary {
                eps_jac: eps,
                n_copies: n,
                bound,
                shocked: hit.len(),
                shocked_before_bound: before,
                fraction_before_bound: before as f64 / spec.realizations as f64,
                median,
                q25: quantile(&hit, 0.25),
                q75: quantile(&hit, 0.75),
                median_ratio: median / inviscid_time,
            });
        }
    }
    Ok(CensusResult {
        times,
        summaries,
        inviscid_time,
        realizations: spec.realizations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalRow {
    /// `None` for the no-reset reference row.
    pub delta_t: Option<f64>,
    pub survivors: usize,
    pub fraction: f64,
    /// Binomial standard error `sqrt(p (1 - p) / R)`.
    pub se: f64,
    /// 95% Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalResult {
    /// One row per reset interval in sweep order, then the no-reset row.
    pub rows: Vec<SurvivalRow>,
    pub realizations: usize,
}

const CALIBRATION_NOTE: &str = "survival thresholds are calibration values; the underlying existence result is not quantitative";

impl SurvivalResult {
    pub fn no_reset(&self) -> &SurvivalRow {
        self.rows.last().expect("no-reset row")
    }

    pub fn reset_rows(&self) -> &[SurvivalRow] {
        &self.rows[..self.rows.len() - 1]
    }

    /// Fractions non-decreasing as `delta_t` shrinks, within `k` binomial
    /// standard errors.
    pub fn monotone_within(&self, k: f64) -> bool {
        self.reset_rows().windows(2).all(|w| {
            let tol = k * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
            w[1].fraction >= w[0].fraction - tol
        })
    }

    /// Smallest-interval survival minus no-reset survival.
    pub fn gain(&self) -> f64 {
        self.reset_rows().last().map_or(0.0, |r| r.fraction) - self.no_reset().fraction
    }

    pub fn to_output(&self) -> ExperimentOutput {
        let mut t = Table::new(
            "survival",
            &["delta_t", "survivors", "fraction", "se", "ci_low", "ci_high"],
        );
        for r in &self.rows {
            let dt = match r.delta_t {
                Some(d) => d.into(),
                None => "none".into(),
            };
            t.push(vec![
                dt,
                r.survivors.into(),
                r.fraction.into(),
                r.se.into(),
                r.ci_low.into(),
                r.ci_high.into(),
            ]);
        }
        ExperimentOutput {
            tables: vec![t],
            summary: json!({
                "realizations": self.realizations,
                "monotone_2sigma": self.monotone_within(2.0),
                "gain_over_no_reset": self.gain(),
                "note": CALIBRATION_NOTE,
            }),
        }
    }
}

fn wilson(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Fraction of realizations reaching `t_final` without a shock, for each reset
/// interval and without resets. Realization `r` uses the same noise in every
/// row.
pub fn exp_survival(spec: &ExperimentSpec) -> Result<SurvivalResult, ExperimentError> {
    spec.validate()?;
    let base = &spec.base;
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.975);
    let intervals: Vec<Option<f64>> = spec.delta_t_list.iter().map(|&d| Some(d)).chain([None]).collect();
    let mut rows = Vec::new();
    for dt in intervals {
        let alive: Vec<Result<bool, ExperimentError>> = (0..spec.realizations)
            .into_par_iter()
            .map(|r| {
                let cfg = RunConfig {
                    delta_t: dt,
                    seed: mix_seed(base.seed, r as u64),
                    ..base.clone()
                };
                Ok(!run_with(&cfg, &cfg.driver(), Recording::FinalOnly)?.stop.is_shock())
            })
            .collect();
        let mut survivors = 0;
        for a in alive {
            survivors += usize::from(a?);
        }
        let n = spec.realizations;
        let p = survivors as f64 / n as f64;
        let (ci_low, ci_high) = wilson(survivors, n, z);
        rows.push(SurvivalRow {
            delta_t: dt,
            survivors,
            fraction: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
            ci_low,
            ci_high,
        });
    }
    Ok(SurvivalResult {
        rows,
        realizations: spec.realizations,
    })
}
