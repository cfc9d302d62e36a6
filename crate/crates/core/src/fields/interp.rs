//! Monotone periodic cubic Hermite interpolation.
//!
//! Knot slopes start from the fourth-order centred difference and are then
//! limited Fritsch–Carlson style: zero at discrete extrema, and otherwise
//! clamped so that `0 <= slope / secant <= 3` on both adjacent cells. That
//! box lies inside the Fritsch–Carlson monotonicity region, so the cubic on
//! every cell stays between its two knot values. The limiter is purely local
//! (each slope reads `y[j-2..=j+2]`), which keeps evaluation exactly
//! equivariant under integer cell shifts.
//!
//! Internally positions are measured in cells: knot `j` sits at `j`, and the
//! slopes are in value units per cell.

use super::{PeriodicGrid, ScalarField};

/// Limited knot slope from the five-point stencil `y[j-2..=j+2]`.
#[inline]
pub(crate) fn limited_slope(ym2: f64, ym1: f64, y0: f64, yp1: f64, yp2: f64) -> f64 {
    let left = y0 - ym1;
    let right = yp1 - y0;
    if left * right <= 0.0 {
        return 0.0;
    }
    let centred = (8.0 * (yp1 - ym1) - (yp2 - ym2)) / 12.0;
    if left > 0.0 {
        centred.clamp(0.0, 3.0 * left.min(right))
    } else {
        centred.clamp(3.0 * left.max(right), 0.0)
    }
}

/// Cubic Hermite on one cell with end values `y0`, `y0 + secant` and end
/// slopes `d0`, `d1`, at local coordinate `theta` in `[0, 1]`.
#[inline]
pub(crate) fn hermite(y0: f64, secant: f64, d0: f64, d1: f64, theta: f64) -> f64 {
    let w = 1.0 - theta;
    y0 + theta * (secant + w * ((d0 - secant) * w - (d1 - secant) * theta))
}

/// Derivative in `theta` of [`hermite`].
#[inline]
pub(crate) fn hermite_slope(secant: f64, d0: f64, d1: f64, theta: f64) -> f64 {
    let a = d0 - secant;
    let b = d1 - secant;
    // q(θ) = θ(1-θ)[a(1-θ) - bθ]
    let w = 1.0 - theta;
    secant + a * w * (w - 2.0 * theta) + b * theta * (3.0 * theta - 2.0)
}

/// Precomputed slopes for repeated evaluation of one field.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    grid: PeriodicGrid,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(field: &ScalarField) -> Self {
        let grid = field.grid();
        let y = field.values();
        let m = y.len();
        let at = |j: usize, off: isize| y[(j as isize + off).rem_euclid(m as isize) as usize];
        let slopes = (0..m)
            .map(|j| limited_slope(at(j, -2), at(j, -1), y[j], at(j, 1), at(j, 2)))
            .collect();
        Self {
            grid,
            values: y.to_vec(),
            slopes,
        }
    }

    #[inline]
    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    /// Value at cell `cell` (any integer, wrapped) and local `theta`.
    #[inline]
    pub fn eval_cell(&self, cell: i64, theta: f64) -> f64 {
        let m = self.values.len() as i64;
        let c = cell.rem_euclid(m) as usize;
        let c1 = if c + 1 == m as usize { 0 } else { c + 1 };
        let y0 = self.values[c];
        hermite(y0, self.values[c1] - y0, self.slopes[c], self.slopes[c1], theta)
    }

    /// Value at `x_base + offset`, with `offset` given in cells. Keeping the
    /// integer base separate makes the result independent of where the
    /// point sits relative to the seam.
    #[inline]
    pub fn eval_offset(&self, base: usize, offset_cells: f64) -> f64 {
        let whole = offset_cells.floor();
        let theta = offset_cells - whole;
        self.eval_cell(base as i64 + whole as i64, theta)
    }

    /// Value at an arbitrary real `x`, wrapped into `[0, 1)`.
    pub fn eval(&self, x: f64) -> f64 {
        let s = x * self.values.len() as f64;
        let whole = s.floor();
        self.eval_cell(whole as i64, s - whole)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(m: usize) -> PeriodicGrid {
        PeriodicGrid::new(m).unwrap()
    }

    #[test]
    fn reproduces_knots() {
        let g = grid(32);
        let f = ScalarField::sample(g, |x| (2.0 * PI * x).sin() + 0.2 * (10.0 * PI * x).cos()).unwrap();
        let p = MonotoneCubic::new(&f);
        for (j, &v) in f.values().iter().enumerate() {
            assert_eq!(p.eval(g.point(j)), v);
            assert_eq!(p.eval(g.point(j) + 3.0), v);
        }
    }

    #[test]
    fn exact_on_linear_sawtooth_away_from_jump() {
        let g = grid(32);
        let f = ScalarField::sample(g, |x| 2.0 * x - 0.5).unwrap();
        let p = MonotoneCubic::new(&f);
        for j in 3..27 {
            let x = (j as f64 + 0.5) / 32.0;
            assert!((p.eval(x) - (2.0 * x - 0.5)).abs() < 1e-15, "j={j}");
        }
    }

    #[test]
    fn smooth_data_accuracy() {
        let g = grid(64);
        let f = ScalarField::sample(g, |x| (2.0 * PI * x).sin()).unwrap();
        assert!((f.interp_eval(0.01) - (0.02 * PI).sin()).abs() < 1e-6);
    }

    #[test]
    fn hermite_slope_matches_finite_difference() {
        let (s, d0, d1) = (0.7, 0.2, 1.9);
        for &t in &[0.0, 0.3, 0.5, 0.99] {
            let h = 1e-6;
            let fd = (hermite(0.0, s, d0, d1, t + h) - hermite(0.0, s, d0, d1, t - h)) / (2.0 * h);
            assert!((fd - hermite_slope(s, d0, d1, t)).abs() < 1e-8);
        }
        assert!((hermite_slope(s, d0, d1, 0.0) - d0).abs() < 1e-15);
        assert!((hermite_slope(s, d0, d1, 1.0) - d1).abs() < 1e-15);
    }

    #[test]
    fn bounded_by_cell_values() {
        // oscillatory data with sharp jumps; each cell must stay within its knots
        let g = grid(16);
        let vals = [0.0, 1.0, 1.0, 5.0, -2.0, -2.1, 3.0, 3.0, 3.1, 0.0, 0.0, 9.0, 8.0, 7.0, 1.0, 0.5];
        let f = ScalarField::new(g, vals.to_vec()).unwrap();
        let p = MonotoneCubic::new(&f);
        for c in 0..16 {
            let (a, b) = (vals[c], vals[(c + 1) % 16]);
            let (lo, hi) = (a.min(b), a.max(b));
            for k in 0..=200 {
                let v = p.eval_cell(c as i64, k as f64 / 200.0);
                assert!(v >= lo - 1e-14 && v <= hi + 1e-14, "cell {c}: {v} not in [{lo},{hi}]");
            }
        }
    }

    #[test]
    fn offset_evaluation_is_shift_equivariant() {
        let g = grid(64);
        let f = ScalarField::sample(g, |x| (2.0 * PI * x).cos().exp()).unwrap();
        let shifted = f.roll(5);
        let (p, q) = (MonotoneCubic::new(&f), MonotoneCubic::new(&shifted));
        for j in 0..64 {
            for &o in &[-3.7, -0.25, 0.0, 0.61, 12.3] {
                let a = p.eval_offset(j, o);
                let b = q.eval_offset((j + 5) % 64, o);
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_data_gives_monotone_interpolant(
                steps in proptest::collection::vec(0.0f64..1.0, 31)
            ) {
                // increasing run over most of the circle, one drop back at the seam
                let mut vals = vec![0.0];
                for s in &steps { vals.push(vals.last().unwrap() + s * s); }
                let g = PeriodicGrid::new(32).unwrap();
                let f = ScalarField::new(g, vals).unwrap();
                let p = MonotoneCubic::new(&f);
                for c in 0..31 {
                    let mut prev = p.eval_cell(c, 0.0);
                    for k in 1..=50 {
                        let v = p.eval_cell(c, k as f64 / 50.0);
                        prop_assert!(v >= prev - 1e-13);
                        prev = v;
                    }
                }
            }
        }
    }
}
