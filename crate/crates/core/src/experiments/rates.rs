//! Convergence to the limiting SPDE in the reset interval and in `N`.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{fit_loglog, mean_se, ExperimentError, ExperimentOutput, ExperimentSpec, RateFit};
use crate::config::integer_ratio;
use crate::fields::ScalarField;
use crate::noise::{mix_seed, NoiseDriver, StreamChecksum};
use crate::output::Table;
use crate::particle::{run_with, Recording, RunConfig, StopReason};
use crate::reference::spde::block_increments;
use crate::reference::{burgers_solve, SpdeSolver, SpectralState};

/// Salt for the SPDE driver seed when coupling is switched off.
const UNCOUPLED_SALT: u64 = 0x5bd1_e995_0000_0001;

/// `v` at the given step indices of the SPDE grid (step `spde_dt`).
fn spde_path(
    spec: &ExperimentSpec,
    n_copies: usize,
    driver: &NoiseDriver,
    sample_every: u64,
    checksum: &mut StreamChecksum,
) -> Result<Vec<ScalarField>, ExperimentError> {
    let base = &spec.base;
    let q = integer_ratio(spec.spde_dt, base.h).expect("validated spde_dt");
    let steps = integer_ratio(base.t_final, spec.spde_dt).expect("validated spde_dt");
    let solver = SpdeSolver::new(base.grid(), base.nu, n_copies, spec.spde_dt)?;
    let u0 = base.initial.sample(base.grid()).expect("validated initial data");
    let mut st = SpectralState::new(&u0);
    let mut out = vec![st.field()];
    for (k, dxi) in block_increments(driver, q, steps, checksum).into_iter().enumerate() {
        solver.step(&mut st, dxi)?;
        if (k as u64 + 1) % sample_every == 0 {
            out.push(st.field());
        }
    }
    Ok(out)
}

fn spde_driver(spec: &ExperimentSpec, n_copies: usize, r: usize) -> NoiseDriver {
    let seed = if spec.coupled {
        mix_seed(spec.base.seed, r as u64)
    } else {
        mix_seed(spec.base.seed ^ UNCOUPLED_SALT, r as u64)
    };
    NoiseDriver::new(seed, n_copies, spec.base.h).expect("validated driver")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateDtRow {
    pub delta_t: f64,
    pub mean_l2: f64,
    pub se_l2: f64,
    pub mean_h2: f64,
    pub se_h2: f64,
    pub survivors: usize,
    pub shocked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateDtResult {
    pub rows: Vec<RateDtRow>,
    pub fit_l2: Option<RateFit>,
    pub fit_h2: Option<RateFit>,
    /// Why a fit is missing (for instance all errors exactly zero).
    pub degenerate: Option<String>,
    /// Per realization, whether both solvers consumed identical increments.
    pub coupling_verified: bool,
    pub realizations: usize,
}

impl RateDtResult {
    /// Errors non-increasing as `delta_t` shrinks, up to `k` combined standard
    /// errors.
    pub fn monotone_within(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let tol = k * (w[0].se_l2.powi(2) + w[1].se_l2.powi(2)).sqrt();
            w[1].mean_l2 <= w[0].mean_l2 + tol
        })
    }

    pub fn to_output(&self) -> ExperimentOutput {
        let mut t = Table::new(
            "rate_dt",
            &["delta_t", "mean_l2_sq", "se_l2_sq", "mean_h2_sq", "se_h2_sq", "survivors", "shocked"],
        );
        for r in &self.rows {
            t.push(vec![
                r.delta_t.into(),
                r.mean_l2.into(),
                r.se_l2.into(),
                r.mean_h2.into(),
                r.se_h2.into(),
                r.survivors.into(),
                r.shocked.into(),
            ]);
        }
        ExperimentOutput {
            tables: vec![t],
            summary: json!({
                "slope_l2": self.fit_l2.as_ref().map(|f| f.slope),
                "slope_l2_se": self.fit_l2.as_ref().map(|f| f.slope_se),
                "slope_h2": self.fit_h2.as_ref().map(|f| f.slope),
                "slope_h2_se": self.fit_h2.as_ref().map(|f| f.slope_se),
                "degenerate": self.degenerate,
                "monotone_2sigma": self.monotone_within(2.0),
                "coupling_verified": self.coupling_verified,
                "realizations": self.realizations,
            }),
        }
    }
}

enum Outcome {
    Completed { l2: f64, h2: f64 },
    Shocked,
}

/// `E ||u^{dt}_T - v_T||^2` in L2 and H2 for each reset interval, with the
/// particle system and the SPDE driven by the same Brownian paths.
pub fn exp_rate_dt(spec: &ExperimentSpec) -> Result<RateDtResult, ExperimentError> {
    spec.validate()?;
    let base = &spec.base;
    let n = base.n_copies;
    let total = base.total_steps();
    let per_real: Vec<Result<(Vec<Outcome>, bool), ExperimentError>> = (0..spec.realizations)
        .into_par_iter()
        .map(|r| {
            let mut v_sum = StreamChecksum::default();
            let v = spde_path(spec, n, &spde_driver(spec, n, r), total, &mut v_sum)?;
            let v_t = v.last().expect("final sample");
            let seed = mix_seed(base.seed, r as u64);
            let mut coupled_ok = true;
            let mut outcomes = Vec::with_capacity(spec.delta_t_list.len());
            for &dt in &spec.delta_t_list {
                let cfg = RunConfig {
                    seed,
                    delta_t: Some(dt),
                    ..base.clone()
                };
                let rep = run_with(&cfg, &cfg.driver(), Recording::FinalOnly)?;
                match rep.stop {
                    StopReason::Completed(_) => {
                        if spec.coupled && rep.noise_checksum != v_sum.digest() {
                            coupled_ok = false;
                        }
                        let diff = rep.final_u.sub(v_t);
                        outcomes.push(Outcome::Completed {
                            l2: diff.l2_norm().powi(2),
                            h2: diff.hs_norm(2).powi(2),
                        });
                    }
                    StopReason::Shock(_) => outcomes.push(Outcome::Shocked),
                }
            }
            Ok((outcomes, coupled_ok))
        })
        .collect();
    let mut table: Vec<(Vec<Outcome>, bool)> = Vec::with_capacity(per_real.len());
    for (r, res) in per_real.into_iter().enumerate() {
        let item = res?;
        if spec.coupled && !item.1 {
            return Err(ExperimentError::CouplingMismatch(r));
        }
        table.push(item);
    }
    let mut rows = Vec::new();
    for (i, &dt) in spec.delta_t_list.iter().enumerate() {
        let mut l2 = Vec::new();
        let mut h2 = Vec::new();
        for (outs, _) in &table {
            if let Outcome::Completed { l2: a, h2: b } = outs[i] {
                l2.push(a);
                h2.push(b);
            }
        }
        let survivors = l2.len();
        if 2 * survivors < spec.realizations {
            return Err(ExperimentError::InsufficientSurvivors {
                delta_t: dt,
                survivors,
                realizations: spec.realizations,
            });
        }
        let (mean_l2, se_l2) = mean_se(&l2);
        let (mean_h2, se_h2) = mean_se(&h2);
        rows.push(RateDtRow {
            delta_t: dt,
            mean_l2,
            se_l2,
            mean_h2,
            se_h2,
            survivors,
            shocked: spec.realizations - survivors,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.delta_t).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.mean_l2).collect();
    let l2se: Vec<f64> = rows.iter().map(|r| r.se_l2).collect();
    let h2: Vec<f64> = rows.iter().map(|r| r.mean_h2).collect();
    let h2se: Vec<f64> = rows.iter().map(|r| r.se_h2).collect();
    let (fit_l2, fit_h2, degenerate) = match (fit_loglog(&xs, &l2, Some(&l2se)), fit_loglog(&xs, &h2, Some(&h2se))) {
        (Ok(a), Ok(b)) => (Some(a), Some(b), None),
        (a, b) => {
            let why = a.as_ref().err().or(b.as_ref().err()).map(|e| e.to_string());
            (a.ok(), b.ok(), why)
        }
    };
    Ok(RateDtResult {
        rows,
        fit_l2,
        fit_h2,
        degenerate,
        coupling_verified: spec.coupled,
        realizations: spec.realizations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateNRow {
    pub n_copies: usize,
    /// `max_t E ||u^b_t - v^N_t||^2` over the sample times.
    pub sup_mean: f64,
    /// Standard error at the maximising time.
    pub sup_se: f64,
    pub argmax_t: f64,
    /// `(t, mean, se)` at every sample time.
    pub by_time: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateNResult {
    pub rows: Vec<RateNRow>,
    pub fit: Option<RateFit>,
    pub degenerate: Option<String>,
    pub realizations: usize,
}

impl RateNResult {
    /// Estimates non-increasing in `N` within `k` combined standard errors.
    pub fn monotone_within(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let tol = k * (w[0].sup_se.powi(2) + w[1].sup_se.powi(2)).sqrt();
            w[1].sup_mean <= w[0].sup_mean + tol
        })
    }

    pub fn to_output(&self) -> ExperimentOutput {
        let mut sup = Table::new("rate_n", &["n_copies", "sup_mean_l2_sq", "sup_se", "argmax_t"]);
        let mut detail = Table::new("rate_n_by_time", &["n_copies", "t", "mean_l2_sq", "se"]);
        for r in &self.rows {
            sup.push(vec![r.n_copies.into(), r.sup_mean.into(), r.sup_se.into(), r.argmax_t.into()]);
            for &(t, m, s) in &r.by_time {
                detail.push(vec![r.n_copies.into(), t.into(), m.into(), s.into()]);
            }
        }
        ExperimentOutput {
            tables: vec![sup, detail],
            summary: json!({
                "slope": self.fit.as_ref().map(|f| f.slope),
                "slope_se": self.fit.as_ref().map(|f| f.slope_se),
                "degenerate": self.degenerate,
                "monotone_2sigma": self.monotone_within(2.0),
                "realizations": self.realizations,
            }),
        }
    }
}

/// `sup_t E ||u^b_t - v^N_t||^2` against deterministic Burgers `u^b` for
/// each `N`. Sample times are multiples of `delta_t_list[0]`.
pub fn exp_rate_n(spec: &ExperimentSpec) -> Result<RateNResult, ExperimentError> {
    spec.validate()?;
    let base = &spec.base;
    let every = integer_ratio(spec.delta_t_list[0], spec.spde_dt).expect("validated sample interval");
    let steps = integer_ratio(base.t_final, spec.spde_dt).expect("validated");
    let times: Vec<f64> = (0..=steps / every).map(|k| (k * every) as f64 * spec.spde_dt).collect();
    let u0 = base.initial.sample(base.grid()).expect("validated initial data");
    let ub = burgers_solve(&u0, base.nu, base.t_final, spec.spde_dt, &times)?;
    let mut rows = Vec::new();
    for &n in &spec.n_list {
        let errs: Vec<Result<Vec<f64>, ExperimentError>> = (0..spec.realizations)
            .into_par_iter()
            .map(|r| {
                let v = spde_path(spec, n, &spde_driver(spec, n, r), every, &mut StreamChecksum::default())?;
                Ok(v.iter().zip(&ub.fields).map(|(a, b)| a.l2_distance(b).powi(2)).collect())
            })
            .collect();
        let errs: Vec<Vec<f64>> = errs.into_iter().collect::<Result<_, _>>()?;
        let by_time: Vec<(f64, f64, f64)> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let col: Vec<f64> = errs.iter().map(|e| e[i]).collect();
                let (m, s) = mean_se(&col);
                (t, m, s)
            })
            .collect();
        let best = by_time
            .iter()
            .copied()
            .fold((0.0, 0.0, 0.0), |acc, p| if p.1 > acc.1 { p } else { acc });
        rows.push(RateNRow {
            n_copies: n,
            sup_mean: best.1,
            sup_se: best.2,
            argmax_t: best.0,
            by_time,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n_copies as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sup_mean).collect();
    let se: Vec<f64> = rows.iter().map(|r| r.sup_se).collect();
    let (fit, degenerate) = match fit_loglog(&xs, &ys, Some(&se)) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(RateNResult {
        rows,
        fit,
        degenerate,
        realizations: spec.realizations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitialData;
    use crate::experiments::ExperimentId;

    fn small_rate_dt(initial: InitialData) -> ExperimentSpec {
        let mut s = ExperimentSpec::preset(ExperimentId::RateDt);
        s.base.m = 32;
        s.base.h = 1.0 / 512.0;
        s.base.t_final = 0.125;
        s.base.initial = initial;
        s.spde_dt = s.base.h;
        s.realizations = 16;
        s.delta_t_list = vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        s
    }

    #[test]
    fn zero_data_is_degenerate() {
        let r = exp_rate_dt(&small_rate_dt(InitialData::Zero)).unwrap();
        assert!(r.rows.iter().all(|row| row.mean_l2 == 0.0 && row.survivors == 16));
        assert!(r.fit_l2.is_none());
        assert!(r.degenerate.is_some());
        assert!(r.coupling_verified);
    }

    #[test]
    fn one_interval_refuses_fit() {
        let mut s = small_rate_dt(InitialData::Sin(1.0));
        s.delta_t_list = vec![1.0 / 16.0];
        let r = exp_rate_dt(&s).unwrap();
        assert!(r.fit_l2.is_none());
        assert!(r.degenerate.unwrap().contains("at least 3"));
    }

    #[test]
    fn reproducible_tables() {
        let s = small_rate_dt(InitialData::Sin(1.0));
        let a = exp_rate_dt(&s).unwrap().to_output();
        let b = exp_rate_dt(&s).unwrap().to_output();
        assert_eq!(a.tables[0].to_csv().unwrap(), b.tables[0].to_csv().unwrap());
    }

    #[test]
    fn constant_data_has_no_n_error() {
        let mut s = ExperimentSpec::preset(ExperimentId::RateN);
        s.base.m = 32;
        s.base.h = 1.0 / 512.0;
        s.spde_dt = s.base.h;
        s.base.t_final = 0.125;
        s.delta_t_list = vec![1.0 / 32.0];
        s.realizations = 16;
        s.base.initial = InitialData::Constant(0.3);
        let r = exp_rate_n(&s).unwrap();
        for row in &r.rows {
            assert!(row.sup_mean < 1e-28, "{}", row.sup_mean);
        }
    }
}
