use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `log y`.
    pub residual: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    pub points: Vec<(f64, f64)>,
    /// Monte Carlo standard errors of `y`, when supplied.
    pub point_se: Vec<f64>,
}

impl RateFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Weighted when `se` is given and every entry is positive: each point is
/// weighted by `(y / se)^2`, the inverse variance of `log y` to first order.
pub fn fit_loglog(x: &[f64], y: &[f64], se: Option<&[f64]>) -> Result<RateFit, ExperimentError> {
    if x.len() != y.len() {
        return Err(ExperimentError::DegenerateFit("x and y lengths differ".into()));
    }
    if x.len() < 3 {
        return Err(ExperimentError::DegenerateFit(format!(
            "{} points given, at least 3 required",
            x.len()
        )));
    }
    if let Some((a, b)) = x.iter().zip(y).find(|(a, b)| !(**a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())) {
        return Err(ExperimentError::DegenerateFit(format!(
            "non-positive or non-finite point ({a}, {b})"
        )));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let weighted = se.filter(|s| s.len() == y.len() && s.iter().all(|&e| e > 0.0 && e.is_finite()));
    let w: Vec<f64> = match weighted {
        Some(s) => s.iter().zip(y).map(|(e, v)| (v / e).powi(2)).collect(),
        None => vec![1.0; x.len()],
    };
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&lx).map(|(w, v)| w * v).sum::<f64>() / sw;
    let my = w.iter().zip(&ly).map(|(w, v)| w * v).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&lx).map(|(w, v)| w * (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(ExperimentError::DegenerateFit("all x values coincide".into()));
    }
    let sxy: f64 = w.iter().zip(lx.iter().zip(&ly)).map(|(w, (a, b))| w * (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res: Vec<f64> = lx.iter().zip(&ly).map(|(a, b)| b - (intercept + slope * a)).collect();
    let n = x.len() as f64;
    let residual = (res.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let slope_se = if weighted.is_some() {
        (1.0 / sxx).sqrt()
    } else {
        let rss: f64 = res.iter().map(|r| r * r).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    };
    Ok(RateFit {
        slope,
        intercept,
        residual,
        slope_se,
        points: x.iter().copied().zip(y.iter().copied()).collect(),
        point_se: weighted.map(<[f64]>::to_vec).unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseDriver;

    #[test]
    fn exact_power_laws() {
        let x = [0.5, 0.25, 0.125, 0.0625];
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let f = fit_loglog(&x, &y, None).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-13);
        assert!(f.intercept.abs() < 1e-13);
        let c = fit_loglog(&x, &[3.0; 4], None).unwrap();
        assert!(c.slope.abs() < 1e-13);
        assert!((c.predict(0.1) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_square_root() {
        let d = NoiseDriver::new(17, 1, 1.0).unwrap();
        let x: Vec<f64> = (0..10).map(|k| 2f64.powi(-k)).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(k, v)| 3.0 * v.sqrt() * (1.0 + 0.01 * d.standard_normal(0, k as u64)))
            .collect();
        let se: Vec<f64> = y.iter().map(|v| 0.01 * v).collect();
        let f = fit_loglog(&x, &y, Some(&se)).unwrap();
        assert!((f.slope - 0.5).abs() < 0.02, "{}", f.slope);
        let g = fit_loglog(&x, &y, None).unwrap();
        assert!((g.slope - 0.5).abs() < 0.02);
    }

    #[test]
    fn refusals() {
        assert!(matches!(fit_loglog(&[1.0], &[1.0], None), Err(ExperimentError::DegenerateFit(_))));
        assert!(fit_loglog(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0], None).is_err());
        assert!(fit_loglog(&[1.0, 2.0, 3.0], &[1.0, -1.0, 2.0], None).is_err());
        assert!(fit_loglog(&[2.0, 2.0, 2.0], &[1.0, 3.0, 2.0], None).is_err());
    }
}
