//! Addressable Wiener increments.
//!
//! Every increment is a pure function of `(master_seed, copy, step)`:
//!
//! 1. A ChaCha8 key is expanded from the master seed
//!    (`ChaCha8Rng::seed_from_u64`), the copy index selects the ChaCha
//!    stream and the step index selects the 64-bit word at position
//!    `2 * step`.
//! 2. The top 53 bits give `u = (bits + 1/2) / 2^53` in the open interval
//!    `(0, 1)`.
//! 3. `z = -sqrt(2) * erfc_inv(2 u)` is a standard Gaussian by inverse CDF.
//! 4. The increment is `sqrt(h) * z`.
//!
//! Nothing depends on call order or thread count, so solvers that share one
//! driver see the same Brownian paths regardless of how they are scheduled.

use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise config: {0}")]
    InvalidConfig(String),
}

/// Inverse-CDF standard normal from a raw 64-bit word.
#[inline]
pub fn gaussian_from_bits(bits: u64) -> f64 {
    let u = ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// SplitMix64 finaliser, used to derive child seeds (per realization,
/// per sweep point) from a master seed.
#[inline]
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct NoiseDriver {
    seed: u64,
    n_copies: usize,
    step: f64,
    sqrt_step: f64,
    base: ChaCha8Rng,
}

impl NoiseDriver {
    pub fn new(seed: u64, n_copies: usize, step: f64) -> Result<Self, NoiseError> {
        if n_copies == 0 {
            return Err(NoiseError::InvalidConfig("n_copies must be at least 1".into()));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(NoiseError::InvalidConfig(format!(
                "base step must be positive and finite, got {step}"
            )));
        }
        Ok(Self {
            seed,
            n_copies,
            step,
            sqrt_step: step.sqrt(),
            base: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_copies(&self) -> usize {
        self.n_copies
    }

    /// Base step `h`.
    pub fn step(&self) -> f64 {
        self.step
    }

    fn stream(&self, copy: usize, step: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(copy as u64);
        rng.set_word_pos(u128::from(step) << 1);
        rng
    }

    /// Standard Gaussian for `(copy, step)`.
    pub fn standard_normal(&self, copy: usize, step: u64) -> f64 {
        gaussian_from_bits(self.stream(copy, step).next_u64())
    }

    /// Increment `W^copy((step+1) h) - W^copy(step h)`.
    pub fn increment(&self, copy: usize, step: u64) -> f64 {
        self.sqrt_step * self.standard_normal(copy, step)
    }

    /// All `N` increments of one step.
    pub fn increments(&self, step: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_copies];
        self.fill_increments(step, &mut out);
        out
    }

    pub fn fill_increments(&self, step: u64, out: &mut [f64]) {
        assert_eq!(out.len(), self.n_copies);
        for (copy, slot) in out.iter_mut().enumerate() {
            *slot = self.increment(copy, step);
        }
    }

    /// Consecutive increments of one copy for steps `range`, reading the
    /// stream sequentially. Bit-identical to calling [`Self::increment`]
    /// per step.
    pub fn copy_path(&self, copy: usize, range: Range<u64>) -> Vec<f64> {
        let mut rng = self.stream(copy, range.start);
        range
            .map(|_| self.sqrt_step * gaussian_from_bits(rng.next_u64()))
            .collect()
    }

    /// Mean over copies of the increments of one step: the common-noise
    /// increment for that step.
    pub fn step_aggregate(&self, step: u64) -> f64 {
        let s: f64 = (0..self.n_copies).map(|c| self.increment(c, step)).sum();
        s / self.n_copies as f64
    }

    /// Common-noise increment over `range`: the ordered sum of the per-step
    /// aggregates, so splitting a range never changes the total.
    pub fn aggregate(&self, range: Range<u64>) -> f64 {
        range.map(|k| self.step_aggregate(k)).sum()
    }

    /// `xi` sampled at every step boundary in `0..=steps`.
    pub fn common_path(&self, steps: u64) -> CommonNoisePath {
        let mut cumulative = Vec::with_capacity(steps as usize + 1);
        let mut xi = 0.0;
        cumulative.push(xi);
        let paths: Vec<Vec<f64>> = (0..self.n_copies).map(|c| self.copy_path(c, 0..steps)).collect();
        for k in 0..steps as usize {
            let s: f64 = paths.iter().map(|p| p[k]).sum();
            xi += s / self.n_copies as f64;
            cumulative.push(xi);
        }
        CommonNoisePath {
            step: self.step,
            cumulative,
        }
    }
}

/// `xi_t = (1/N) sum_j W^j_t` at step boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonNoisePath {
    step: f64,
    cumulative: Vec<f64>,
}

impl CommonNoisePath {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.cumulative.len() - 1
    }

    /// Value after `k` steps.
    pub fn at_step(&self, k: usize) -> f64 {
        self.cumulative[k]
    }

    pub fn increment(&self, range: Range<usize>) -> f64 {
        self.cumulative[range.end] - self.cumulative[range.start]
    }

    pub fn values(&self) -> &[f64] {
        &self.cumulative
    }
}

/// FNV-1a over the bit patterns of consumed increments; two solvers that
/// claim to share a Brownian path must produce the same digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamChecksum(u64);

impl Default for StreamChecksum {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl StreamChecksum {
    pub fn absorb(&mut self, value: f64) {
        for b in value.to_bits().to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn digest(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(NoiseDriver::new(42, 2, 1e-3).is_ok());
        assert!(matches!(NoiseDriver::new(42, 0, 1e-3), Err(NoiseError::InvalidConfig(_))));
        assert!(NoiseDriver::new(42, 2, 0.0).is_err());
        assert!(NoiseDriver::new(42, 2, -1.0).is_err());
    }

    #[test]
    fn determinism_and_addressing() {
        let a = NoiseDriver::new(42, 3, 1e-3).unwrap();
        let b = NoiseDriver::new(42, 3, 1e-3).unwrap();
        for k in [0u64, 1, 17, 1_000_003] {
            assert_eq!(a.increments(k), b.increments(k));
            assert_eq!(a.increment(2, k).to_bits(), a.increment(2, k).to_bits());
        }
        // query order does not matter
        let late = a.increment(1, 500);
        let _ = a.increment(0, 3);
        assert_eq!(a.increment(1, 500).to_bits(), late.to_bits());
        // sequential path reads agree with addressed reads
        let path = a.copy_path(1, 10..40);
        for (i, v) in path.iter().enumerate() {
            assert_eq!(v.to_bits(), a.increment(1, 10 + i as u64).to_bits());
        }
        let c = NoiseDriver::new(43, 3, 1e-3).unwrap();
        assert_ne!(a.increment(0, 0), c.increment(0, 0));
    }

    #[test]
    fn aggregate_is_additive() {
        let d = NoiseDriver::new(7, 4, 0.01).unwrap();
        assert_eq!(d.aggregate(5..5), 0.0);
        assert_eq!(d.aggregate(0..1), d.increments(0).iter().sum::<f64>() / 4.0);
        let whole = d.aggregate(0..10);
        let split: f64 = (0..10).map(|k| d.aggregate(k..k + 1)).sum();
        assert_eq!(whole.to_bits(), split.to_bits());
        let path = d.common_path(10);
        assert_eq!(path.at_step(0), 0.0);
        assert!((path.at_step(10) - whole).abs() < 1e-15);
    }

    #[test]
    fn variance_and_independence() {
        let h = 1e-3;
        let d = NoiseDriver::new(2024, 2, h).unwrap();
        let n = 1_000_000u64;
        let a = d.copy_path(0, 0..n);
        let b = d.copy_path(1, 0..n);
        let mean = a.iter().sum::<f64>() / n as f64;
        let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        // standard error of the variance estimate is h*sqrt(2/n) ~ 0.14%
        assert!((var / h - 1.0).abs() < 0.01, "var = {var}");
        let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        let rho = cov / h;
        // standard error 1/sqrt(n) = 0.001
        assert!(rho.abs() < 0.005, "rho = {rho}");
    }

    #[test]
    fn averaged_brownian_variance() {
        // Var(xi_1) = T / N for T = 1, N = 4
        let h = 0.01;
        let steps = 100u64;
        let reps = 100_000u64;
        let vals: Vec<f64> = (0..reps)
            .map(|r| {
                let d = NoiseDriver::new(mix_seed(99, r), 4, h).unwrap();
                (0..4)
                    .map(|c| d.copy_path(c, 0..steps).iter().sum::<f64>())
                    .sum::<f64>()
                    / 4.0
            })
            .collect();
        let var = vals.iter().map(|v| v * v).sum::<f64>() / reps as f64;
        assert!((var / 0.25 - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn checksum_detects_difference() {
        let mut a = StreamChecksum::default();
        let mut b = StreamChecksum::default();
        a.absorb(0.1);
        b.absorb(0.1);
        assert_eq!(a, b);
        b.absorb(0.2);
        a.absorb(0.200_000_000_1);
        assert_ne!(a, b);
    }
}
