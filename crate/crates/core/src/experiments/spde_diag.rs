//! Pathwise diagnostics of the limiting SPDE: energy balance and the
//! high-mode tail.

use serde::Serialize;
use serde_json::json;

use super::{ExperimentError, ExperimentOutput, ExperimentSpec};
use crate::config::integer_ratio;
use crate::fields::ScalarField;
use crate::noise::{mix_seed, NoiseDriver, StreamChecksum};
use crate::output::Table;
use crate::reference::spde::block_increments;
use crate::reference::{SpdeSolver, SpectralState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySummary {
    pub n_copies: usize,
    /// `2 nu (1 - 1/N)`.
    pub coefficient: f64,
    /// Least-squares `c` in `dE = -c D dt` over all steps.
    pub fitted_coefficient: f64,
    pub max_step_residual: f64,
    /// `|sum of residuals| / sum of predicted dissipation`.
    pub cumulative_relative: f64,
    /// Largest one-step increase of `||v||`; non-positive when monotone.
    pub max_norm_increase: f64,
    pub e0: f64,
    pub e_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLawResult {
    pub summaries: Vec<EnergySummary>,
    /// Per step `(N, t, E, D, residual)`, thinned to every `stride` steps.
    pub trace: Vec<(usize, f64, f64, f64, f64)>,
    pub stride: u64,
}

impl EnergyLawResult {
    /// `fitted(N_0) / fitted(N_1)` for the first two entries.
    pub fn coefficient_ratio(&self) -> Option<f64> {
        match &self.summaries[..] {
            [a, b, ..] => Some(a.fitted_coefficient / b.fitted_coefficient),
            _ => None,
        }
    }

    pub fn to_output(&self) -> ExperimentOutput {
        let mut s = Table::new(
            "energy_summary",
            &[
                "n_copies",
                "coefficient",
                "fitted_coefficient",
                "max_step_residual",
                "cumulative_relative",
                "max_norm_increase",
                "e0",
                "e_final",
            ],
        );
        for r in &self.summaries {
            s.push(vec![
                r.n_copies.into(),
                r.coefficient.into(),
                r.fitted_coefficient.into(),
                r.max_step_residual.into(),
                r.cumulative_relative.into(),
                r.max_norm_increase.into(),
                r.e0.into(),
                r.e_final.into(),
            ]);
        }
        let mut t = Table::new("energy_trace", &["n_copies", "t", "energy", "dissipation", "residual"]);
        for &(n, time, e, d, res) in &self.trace {
            t.push(vec![n.into(), time.into(), e.into(), d.into(), res.into()]);
        }
        ExperimentOutput {
            tables: vec![s, t],
            summary: json!({
                "summaries": self.summaries,
                "coefficient_ratio": self.coefficient_ratio(),
            }),
        }
    }
}

fn spde_increments(spec: &ExperimentSpec, n_copies: usize) -> (SpdeSolver, Vec<f64>) {
    let base = &spec.base;
    let q = integer_ratio(spec.spde_dt, base.h).expect("validated spde_dt");
    let steps = integer_ratio(base.t_final, spec.spde_dt).expect("validated spde_dt");
    let driver = NoiseDriver::new(mix_seed(base.seed, 0), n_copies, base.h).expect("validated driver");
    let incs = block_increments(&driver, q, steps, &mut StreamChecksum::default());
    let solver = SpdeSolver::new(base.grid(), base.nu, n_copies, spec.spde_dt).expect("validated solver");
    (solver, incs)
}

/// Residual of `d ||v||^2 = -2 nu (1 - 1/N) ||v_x||^2 dt` along one SPDE path
/// per `N`, with the dissipation integrated by the trapezoidal rule.
pub fn exp_energy_law(spec: &ExperimentSpec) -> Result<EnergyLawResult, ExperimentError> {
    spec.validate()?;
    let u0 = spec.base.initial.sample(spec.base.grid()).expect("validated initial data");
    let dt = spec.spde_dt;
    let total = integer_ratio(spec.base.t_final, dt).expect("validated spde_dt");
    let stride = (total / 1000).max(1);
    let mut summaries = Vec::new();
    let mut trace = Vec::new();
    for &n in &spec.n_list {
        let (solver, incs) = spde_increments(spec, n);
        let coefficient = 2.0 * spec.base.nu * (1.0 - 1.0 / n as f64);
        let mut st = SpectralState::new(&u0);
        let e_start = st.energy();
        let (mut e0, mut d0) = (e_start, st.dissipation());
        trace.push((n, 0.0, e0, d0, 0.0));
        let (mut sum_res, mut sum_diss) = (0.0, 0.0);
        let (mut sxy, mut sxx) = (0.0, 0.0);
        let mut max_res = 0.0f64;
        let mut max_inc = f64::NEG_INFINITY;
        for (k, dxi) in incs.into_iter().enumerate() {
            solver.step(&mut st, dxi)?;
            let (e1, d1) = (st.energy(), st.dissipation());
            let dbar = 0.5 * (d0 + d1) * dt;
            let res = (e1 - e0) + coefficient * dbar;
            sum_res += res;
            sum_diss += coefficient * dbar;
            sxy += -(e1 - e0) * dbar;
            sxx += dbar * dbar;
            max_res = max_res.max(res.abs());
            max_inc = max_inc.max(e1.sqrt() - e0.sqrt());
            if (k as u64 + 1) % stride == 0 {
                trace.push((n, st.t, e1, d1, res));
            }
            (e0, d0) = (e1, d1);
        }
        let (fitted_coefficient, cumulative_relative) = if sum_diss > 0.0 {
            (sxy / sxx, sum_res.abs() / sum_diss)
        } else {
            (0.0, sum_res.abs())
        };
        summaries.push(EnergySummary {
            n_copies: n,
            coefficient,
            fitted_coefficient,
            max_step_residual: max_res,
            cumulative_relative,
            max_norm_increase: max_inc,
            e0: e_start,
            e_final: e0,
        });
    }
    Ok(EnergyLawResult { summaries, trace, stride })
}

/// Modes below this multiple of `eps * ||v_t||` are indistinguishable from
/// transform round-off.
const RESOLUTION_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralDecayResult {
    pub modes: Vec<usize>,
    /// `sup_{t >= t_1} n^2 |v_hat_t(n)|^2`.
    pub raw: Vec<f64>,
    /// As `raw`, with unresolved coefficients counted as zero.
    pub resolved: Vec<f64>,
    pub burn_in: f64,
    /// `max / min` of `raw` over the reported modes.
    pub raw_ratio: f64,
    /// Least-squares slope of `log resolved` against `log n` over the
    /// resolved modes in the trend window; `None` with fewer than 3.
    pub trend_slope: Option<f64>,
    /// The same fit on `raw`, round-off included.
    pub raw_trend_slope: Option<f64>,
    pub trend_window: (usize, usize),
}

impl SpectralDecayResult {
    pub fn all_finite(&self) -> bool {
        self.raw.iter().chain(&self.resolved).all(|v| v.is_finite())
    }

    /// Non-increasing trend over the window: non-positive fitted slopes for
    /// the raw values and the resolved ones (or no resolved modes left).
    pub fn non_increasing_trend(&self) -> bool {
        let any = self
            .modes
            .iter()
            .zip(&self.resolved)
            .any(|(&n, &v)| n >= self.trend_window.0 && n <= self.trend_window.1 && v > 0.0);
        let resolved = match self.trend_slope {
            Some(s) => s <= 0.0,
            None => !any,
        };
        resolved && self.raw_trend_slope.is_none_or(|s| s <= 0.0)
    }

    pub fn resolved_count(&self) -> usize {
        self.resolved.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn to_output(&self) -> ExperimentOutput {
        let mut t = Table::new("spectral_decay", &["n", "sup_n2_abs2_raw", "sup_n2_abs2_resolved"]);
        for ((&n, &r), &s) in self.modes.iter().zip(&self.raw).zip(&self.resolved) {
            t.push(vec![n.into(), r.into(), s.into()]);
        }
        ExperimentOutput {
            tables: vec![t],
            summary: json!({
                "burn_in": self.burn_in,
                "raw_max_over_min": self.raw_ratio,
                "trend_slope": self.trend_slope,
                "raw_trend_slope": self.raw_trend_slope,
                "trend_window": self.trend_window,
                "resolved_modes": self.resolved_count(),
                "finite": self.all_finite(),
                "non_increasing_trend": self.non_increasing_trend(),
            }),
        }
    }
}

pub(crate) fn spectral_tail(
    solver: &SpdeSolver,
    u0: &ScalarField,
    incs: &[f64],
    burn_in_steps: usize,
    modes: std::ops::RangeInclusive<usize>,
    trend_window: (usize, usize),
) -> Result<SpectralDecayResult, ExperimentError> {
    let modes: Vec<usize> = modes.collect();
    let mut raw = vec![0.0f64; modes.len()];
    let mut resolved = vec![0.0f64; modes.len()];
    let mut st = SpectralState::new(u0);
    let mut observe = |st: &SpectralState| {
        let floor = RESOLUTION_FACTOR * f64::EPSILON * st.energy().sqrt();
        for (i, &n) in modes.iter().enumerate() {
            let c = st.spectrum.coeff(n as i64).norm();
            let w = (n * n) as f64 * c * c;
            raw[i] = raw[i].max(w);
            if c > floor {
                resolved[i] = resolved[i].max(w);
            }
        }
    };
    if burn_in_steps == 0 {
        observe(&st);
    }
    for (k, &dxi) in incs.iter().enumerate() {
        solver.step(&mut st, dxi)?;
        if k + 1 >= burn_in_steps {
            observe(&st);
        }
    }
    let hi = raw.iter().copied().fold(0.0, f64::max);
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let window_slope = |vals: &[f64]| {
        let (lx, ly): (Vec<f64>, Vec<f64>) = modes
            .iter()
            .zip(vals)
            .filter(|(&n, &v)| n >= trend_window.0 && n <= trend_window.1 && v > 0.0)
            .map(|(&n, &v)| ((n as f64).ln(), v.ln()))
            .unzip();
        (lx.len() >= 3).then(|| {
            let mx = lx.iter().sum::<f64>() / lx.len() as f64;
            let my = ly.iter().sum::<f64>() / ly.len() as f64;
            let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
            sxy / sxx
        })
    };
    let trend_slope = window_slope(&resolved);
    let raw_trend_slope = window_slope(&raw);
    Ok(SpectralDecayResult {
        modes,
        raw,
        resolved,
        burn_in: burn_in_steps as f64 * solver.dt(),
        raw_ratio: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        trend_slope,
        raw_trend_slope,
        trend_window,
    })
}

/// `sup_{t >= T/2} n^2 |v_hat_t(n)|^2` for `n` in `8..=64` along one SPDE
/// path with `N = base.n_copies`; the trend is judged over `16..=64`.
pub fn exp_spectral_decay(spec: &ExperimentSpec) -> Result<SpectralDecayResult, ExperimentError> {
    spec.validate()?;
    let u0 = spec.base.initial.sample(spec.base.grid()).expect("validated initial data");
    let (solver, incs) = spde_increments(spec, spec.base.n_copies);
    let top = 64.min(spec.base.grid().max_mode());
    spectral_tail(&solver, &u0, &incs, incs.len() / 2, 8..=top, (16, top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitialData;
    use crate::experiments::ExperimentId;

    fn short(id: ExperimentId, initial: InitialData) -> ExperimentSpec {
        let mut s = ExperimentSpec::preset(id);
        s.base.m = 64;
        s.base.t_final = 0.05;
        s.base.initial = initial;
        s
    }

    #[test]
    fn constant_energy_is_trivial() {
        let r = exp_energy_law(&short(ExperimentId::EnergyLaw, InitialData::Constant(0.7))).unwrap();
        for s in &r.summaries {
            assert!(s.max_step_residual < 1e-15);
            assert!((s.e0 - 0.49).abs() < 1e-14);
        }
    }

    #[test]
    fn energy_law_short_path() {
        let r = exp_energy_law(&short(ExperimentId::EnergyLaw, InitialData::SinCos { a: 1.0, b: 0.5 })).unwrap();
        for s in &r.summaries {
            assert!(s.cumulative_relative < 1e-2, "{s:?}");
            assert!(s.max_norm_increase <= 1e-10);
            assert!((s.fitted_coefficient / s.coefficient - 1.0).abs() < 1e-2);
        }
        let ratio = r.coefficient_ratio().unwrap();
        assert!((ratio - 4.0 / 7.0).abs() < 1e-2, "{ratio}");
    }

    #[test]
    fn zero_field_has_zero_tail() {
        let r = exp_spectral_decay(&short(ExperimentId::SpectralDecay, InitialData::Zero)).unwrap();
        assert!(r.raw.iter().all(|&v| v == 0.0));
        assert!(r.non_increasing_trend());
        assert_eq!(r.modes, (8..=31).collect::<Vec<_>>());
    }

    #[test]
    fn heat_equation_tail_vanishes() {
        let g = crate::fields::PeriodicGrid::new(128).unwrap();
        let u0 = ScalarField::sample(g, |x| {
            (1..=20).map(|n| (2.0 * std::f64::consts::PI * n as f64 * x).sin() / n as f64).sum()
        })
        .unwrap();
        let solver = SpdeSolver::new(g, 0.5, 4, 1e-3).unwrap().linear();
        let incs = vec![0.0; 200];
        let r = spectral_tail(&solver, &u0, &incs, 100, 8..=40, (16, 40)).unwrap();
        assert!(r.raw.iter().all(|&v| v < 1e-30), "{:?}", r.raw);
        assert!(r.non_increasing_trend());
    }

    #[test]
    fn tail_decreases_early() {
        let g = crate::fields::PeriodicGrid::new(128).unwrap();
        let u0 = InitialData::SinCos { a: 1.0, b: 0.5 }.sample(g).unwrap();
        let solver = SpdeSolver::new(g, 0.5, 4, 1e-4).unwrap();
        let incs = vec![0.0; 200];
        let r = spectral_tail(&solver, &u0, &incs, 100, 8..=40, (8, 40)).unwrap();
        assert!(r.resolved_count() >= 3);
        assert!(r.trend_slope.unwrap() < 0.0);
    }
}
