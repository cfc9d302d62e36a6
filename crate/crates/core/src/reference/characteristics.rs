//! First crossing of inviscid characteristics `x = a + t u_0(a)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::ReferenceError;
use crate::fields::{ScalarField, Spectrum};

/// `d_x u_0` evaluated off-grid from the trigonometric interpolant.
fn derivative_at(spec: &Spectrum, x: f64) -> f64 {
    let kmax = spec.grid().max_mode();
    let mut s = 0.0;
    for n in 1..=kmax {
        let k = 2.0 * PI * n as f64;
        let c = spec.coeff(n as i64) * Complex64::new(0.0, k) * Complex64::from_polar(1.0, k * x);
        s += 2.0 * c.re;
    }
    s
}

/// `t* = -1 / min_x u_0'(x)`. The minimum is located on the grid and then
/// refined by golden-section search on the trigonometric interpolant.
pub fn inviscid_shock_time(u0: &ScalarField) -> Result<f64, ReferenceError> {
    let spec = Spectrum::from_field(u0);
    let d = spec.derivative().to_field();
    let (j, &dmin) = d
        .values()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let scale = u0.sup_norm().max(1e-300);
    if dmin >= -1e-12 * scale {
        return Err(ReferenceError::NoShock);
    }
    let dx = u0.grid().dx();
    let (mut lo, mut hi) = (u0.grid().point(j) - dx, u0.grid().point(j) + dx);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (derivative_at(&spec, a), derivative_at(&spec, b));
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = derivative_at(&spec, a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = derivative_at(&spec, b);
        }
    }
    let refined = fa.min(fb).min(dmin);
    Ok(-1.0 / refined)
}
