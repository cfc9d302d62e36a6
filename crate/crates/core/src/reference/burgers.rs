//! Deterministic viscous Burgers `u_t + u u_x = nu u_xx`, pseudo-spectral
//! in space with fourth-order integrating-factor Runge–Kutta (Lawson) in
//! time. Diffusion is integrated exactly through `e^{-4 pi^2 n^2 nu t}`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use super::ReferenceError;
use crate::config::integer_ratio;
use crate::fields::{PeriodicGrid, ScalarField, Spectrum};

/// `d/dt u_hat(n) = -4 pi^2 n^2 nu u_hat(n) + FT[-u u_x](n)`.
pub fn burgers_drift(spec: &Spectrum, nu: f64) -> Spectrum {
    let mut out = spec.advection();
    for (k, c) in out.coeffs_mut().iter_mut().enumerate() {
        let n = spec.wavenumber(k) as f64;
        *c -= spec.coeffs()[k] * (4.0 * PI * PI * n * n * nu);
    }
    out.dealias();
    out
}

pub(crate) fn diffusion_factors(grid: PeriodicGrid, nu: f64, dt: f64) -> Vec<f64> {
    let spec = Spectrum::zeros(grid);
    (0..grid.len())
        .map(|k| {
            let n = spec.wavenumber(k) as f64;
            (-4.0 * PI * PI * n * n * nu * dt).exp()
        })
        .collect()
}

/// `dt * sup|u| * 2 pi K`.
pub(crate) fn cfl_number(grid: PeriodicGrid, dt: f64, sup: f64) -> f64 {
    dt * sup * 2.0 * PI * grid.max_mode() as f64
}

#[derive(Debug, Clone)]
pub struct BurgersSolver {
    grid: PeriodicGrid,
    nu: f64,
    dt: f64,
    full: Vec<f64>,
    half: Vec<f64>,
}

impl BurgersSolver {
    pub fn new(grid: PeriodicGrid, nu: f64, dt: f64) -> Result<Self, ReferenceError> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(ReferenceError::InvalidInput(format!("viscosity {nu}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ReferenceError::InvalidInput(format!("time step {dt}")));
        }
        Ok(Self {
            grid,
            nu,
            dt,
            full: diffusion_factors(grid, nu, dt),
            half: diffusion_factors(grid, nu, 0.5 * dt),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn apply(factors: &[f64], s: &Spectrum) -> Spectrum {
        let mut out = s.clone();
        for (c, f) in out.coeffs_mut().iter_mut().zip(factors) {
            *c *= *f;
        }
        out
    }

    /// One Lawson RK4 step. `t` only labels a CFL error.
    pub fn step(&self, v: &Spectrum, t: f64) -> Result<Spectrum, ReferenceError> {
        let dt = self.dt;
        let (k1, sup) = v.advection_and_sup();
        let number = cfl_number(self.grid, dt, sup);
        if !(number < 1.0) {
            return Err(ReferenceError::CflViolation { t, number });
        }
        let ev_half = Self::apply(&self.half, v);

        let mut s2 = v.clone();
        s2.add_scaled(&k1, 0.5 * dt);
        let k2 = Self::apply(&self.half, &s2).advection();

        let mut s3 = ev_half.clone();
        s3.add_scaled(&k2, 0.5 * dt);
        let k3 = s3.advection();

        let mut s4 = Self::apply(&self.full, v);
        s4.add_scaled(&Self::apply(&self.half, &k3), dt);
        let k4 = s4.advection();

        let mut out = Self::apply(&self.full, v);
        out.add_scaled(&Self::apply(&self.full, &k1), dt / 6.0);
        let mut mid = k2;
        mid.add_scaled(&k3, 1.0);
        out.add_scaled(&Self::apply(&self.half, &mid), dt / 3.0);
        out.add_scaled(&k4, dt / 6.0);
        Ok(out)
    }
}

/// Solution samples at a list of times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
}

impl Trajectory {
    pub fn last(&self) -> &ScalarField {
        self.fields.last().expect("non-empty trajectory")
    }

    /// `t,x,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,value\n");
        for (t, f) in self.times.iter().zip(&self.fields) {
            for (x, v) in f.grid().points().zip(f.values()) {
                let _ = writeln!(out, "{t:.16e},{x:.16e},{v:.16e}");
            }
        }
        out
    }
}

/// Solve to `t_final`, sampling at each entry of `sample_times` (multiples of
/// `dt`, ascending; `t_final` is always included).
pub fn burgers_solve(
    u0: &ScalarField,
    nu: f64,
    t_final: f64,
    dt: f64,
    sample_times: &[f64],
) -> Result<Trajectory, ReferenceError> {
    let solver = BurgersSolver::new(u0.grid(), nu, dt)?;
    let total = integer_ratio(t_final, dt)
        .ok_or_else(|| ReferenceError::InvalidInput(format!("t_final {t_final} is not a multiple of dt {dt}")))?;
    let mut marks: Vec<u64> = Vec::new();
    for &t in sample_times {
        let k = if t == 0.0 {
            0
        } else {
            integer_ratio(t, dt)
                .ok_or_else(|| ReferenceError::InvalidInput(format!("sample time {t} is not a multiple of dt")))?
        };
        if k > total || marks.last().is_some_and(|&p| p >= k) {
            return Err(ReferenceError::InvalidInput("sample times must ascend within [0, t_final]".into()));
        }
        marks.push(k);
    }
    if marks.last() != Some(&total) {
        marks.push(total);
    }
    let mut v = Spectrum::from_field(u0);
    v.dealias();
    let mut out = Trajectory {
        times: Vec::new(),
        fields: Vec::new(),
    };
    let mut next = 0;
    for k in 0..=total {
        if next < marks.len() && marks[next] == k {
            out.times.push(k as f64 * dt);
            out.fields.push(v.to_field());
            next += 1;
        }
        if k < total {
            v = solver.step(&v, k as f64 * dt)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::cole_hopf::ColeHopf;
    use num_complex::Complex64;

    fn is_zero(c: Complex64) -> bool {
        c.re == 0.0 && c.im == 0.0
    }

    fn grid(m: usize) -> PeriodicGrid {
        PeriodicGrid::new(m).unwrap()
    }

    #[test]
    fn drift_cases() {
        let g = grid(32);
        let z = Spectrum::zeros(g);
        assert!(burgers_drift(&z, 0.5).coeffs().iter().all(|&c| is_zero(c)));

        let s = Spectrum::from_field(&ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap());
        let d = burgers_drift(&s, 0.5);
        // linear part on the n = 1 eigenfunction
        let rate = d.coeff(1) / s.coeff(1);
        assert!((rate.re + 4.0 * PI * PI * 0.5).abs() < 1e-10 && rate.im.abs() < 1e-12);

        // nonlinear part against a direct convolution -pi i n sum u(n-k) u(k)
        let nl = s.advection();
        for n in -8i64..=8 {
            let mut conv = Complex64::new(0.0, 0.0);
            for k in -8i64..=8 {
                conv += s.coeff(n - k) * s.coeff(k);
            }
            let want = Complex64::new(0.0, -PI * n as f64) * conv;
            assert!((nl.coeff(n) - want).norm() < 1e-13, "n={n}");
        }
        // only n = +-2 content: -u u_x = -pi sin(4 pi x)
        assert!((nl.coeff(2) - Complex64::new(0.0, PI / 2.0)).norm() < 1e-13);
        assert!(nl.coeff(1).norm() < 1e-14 && nl.coeff(3).norm() < 1e-14);
    }

    #[test]
    fn constants_stay_constant() {
        let g = grid(32);
        for c in [0.0, 0.8] {
            let tr = burgers_solve(&ScalarField::constant(g, c), 0.5, 0.1, 1e-3, &[0.05]).unwrap();
            assert_eq!(tr.times, vec![0.05, 0.1]);
            assert!(tr.last().values().iter().all(|v| (v - c).abs() < 1e-14));
        }
    }

    #[test]
    fn matches_cole_hopf() {
        let g = grid(64);
        let u0 = ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap();
        let tr = burgers_solve(&u0, 0.5, 0.1, 1e-3, &[]).unwrap();
        let exact = ColeHopf::new(&u0, 0.5).unwrap().sample(0.1, g);
        assert!(tr.last().max_abs_diff(&exact) < 1e-9, "{}", tr.last().max_abs_diff(&exact));
    }

    #[test]
    fn galilean_boost() {
        // u0 + c at time t equals c + u(t, x - c t); c t = 3 dx
        let g = grid(64);
        let (dt, t) = (0.0625 / 64.0, 0.0625);
        let c = 3.0 / 64.0 / t;
        let u0 = ScalarField::sample(g, |x| (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos()).unwrap();
        let boosted = ScalarField::sample(g, |x| c + (2.0 * PI * x).sin() + 0.3 * (6.0 * PI * x).cos()).unwrap();
        let a = burgers_solve(&u0, 0.5, t, dt, &[]).unwrap();
        let b = burgers_solve(&boosted, 0.5, t, dt, &[]).unwrap();
        let want: Vec<f64> = a.last().roll(3).values().iter().map(|v| v + c).collect();
        let got = b.last().values();
        let err = want.iter().zip(got).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err:e}");
    }

    #[test]
    fn cfl_is_enforced() {
        let g = grid(256);
        let u0 = ScalarField::sample(g, |x| 50.0 * (2.0 * PI * x).sin()).unwrap();
        assert!(matches!(
            burgers_solve(&u0, 0.5, 0.01, 1e-3, &[]),
            Err(ReferenceError::CflViolation { .. })
        ));
    }

    #[test]
    fn trajectory_csv() {
        let g = grid(8);
        let tr = burgers_solve(&ScalarField::zeros(g), 0.5, 0.002, 1e-3, &[0.0]).unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,x,value\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 8);
    }
}
