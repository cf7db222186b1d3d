//! Uniform scalar quantizer mapping continuous observations onto a finite
//! alphabet for the universal coders.
//!
//! The quantizer saturates: values outside `[lo, hi]` map to the edge cells
//! rather than erroring, so a test statistic stays defined for every input.
//! The edge cells therefore absorb the tail mass when computing quantized
//! divergences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistributionModel, KlMethod, KlResult, LOG2_E};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuantError {
    #[error("invalid quantizer: {0}")]
    Invalid(String),
    #[error("auto_range requires tail_mass in (0, 0.5), got {0}")]
    BadTailMass(f64),
    #[error("auto_range requires a continuous f0, got {0}")]
    DiscreteModel(&'static str),
    #[error("cell index {index} out of range for alphabet of {alphabet}")]
    IndexOutOfRange { index: usize, alphabet: usize },
}

/// Uniform quantizer over `[lo, hi]` with step `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
    pub alphabet: usize,
}

impl QuantizerSpec {
    /// Builds from an explicit step; the alphabet size is `ceil((hi-lo)/delta)`
    /// (with a tolerance guard so exact multiples do not gain a phantom cell).
    pub fn from_step(lo: f64, hi: f64, delta: f64) -> Result<Self, QuantError> {
        if !(hi > lo) || !(delta > 0.0) {
            return Err(QuantError::Invalid(format!("need hi > lo and delta > 0, got [{lo}, {hi}] step {delta}")));
        }
        let cells = (hi - lo) / delta;
        let alphabet = (cells - 1e-9).ceil().max(2.0) as usize;
        Ok(QuantizerSpec { lo, hi, delta, alphabet })
    }

    /// Builds a `2^bits`-cell quantizer spanning `[lo, hi]`.
    pub fn from_bits(lo: f64, hi: f64, bits: u32) -> Result<Self, QuantError> {
        if !(hi > lo) || bits == 0 {
            return Err(QuantError::Invalid(format!("need hi > lo and bits >= 1, got [{lo}, {hi}] bits {bits}")));
        }
        let alphabet = 1usize << bits;
        Ok(QuantizerSpec { lo, hi, delta: (hi - lo) / alphabet as f64, alphabet })
    }

    /// Maps a real to its cell index; out-of-range values saturate.
    pub fn quantize(&self, x: f64) -> usize {
        let idx = ((x - self.lo) / self.delta).floor();
        if idx < 0.0 {
            0
        } else if idx >= self.alphabet as f64 {
            self.alphabet - 1
        } else {
            idx as usize
        }
    }

    /// Center of a cell; an out-of-range index is a programmer bug.
    pub fn cell_center(&self, index: usize) -> Result<f64, QuantError> {
        if index >= self.alphabet {
            return Err(QuantError::IndexOutOfRange { index, alphabet: self.alphabet });
        }
        Ok(self.lo + (index as f64 + 0.5) * self.delta)
    }

    /// Probability mass a model assigns to each cell, edge cells absorbing
    /// the out-of-range tails (matching the saturating `quantize`).
    pub fn cell_masses(&self, model: &DistributionModel) -> Vec<f64> {
        let mut masses = Vec::with_capacity(self.alphabet);
        let mut prev = 0.0; // CDF at -inf
        for i in 0..self.alphabet {
            let upper = if i + 1 == self.alphabet {
                1.0 // CDF at +inf
            } else {
                model.cdf(self.lo + (i as f64 + 1.0) * self.delta)
            };
            masses.push((upper - prev).max(0.0));
            prev = upper;
        }
        masses
    }
}

/// Quantizes both densities and computes the finite-alphabet divergence
/// `D(f1^Δ || f0^Δ)` in bits/nats. By data processing this never exceeds the
/// continuous `D(f1||f0)`.
pub fn quantized_kl(f1: &DistributionModel, f0: &DistributionModel, spec: &QuantizerSpec) -> KlResult {
    let m1 = spec.cell_masses(f1);
    let m0 = spec.cell_masses(f0);
    let mut nats = 0.0;
    for (a, b) in m1.iter().zip(m0.iter()) {
        if *a <= 0.0 {
            continue;
        }
        if *b <= 0.0 {
            return KlResult { nats: f64::INFINITY, bits: f64::INFINITY, method: KlMethod::DiscreteSum };
        }
        nats += a * (a / b).ln();
    }
    let nats = nats.max(0.0);
    KlResult { nats, bits: nats * LOG2_E, method: KlMethod::DiscreteSum }
}

/// Picks `(lo, hi)` as the `tail_mass` and `1 - tail_mass` quantiles of the
/// known null density.
pub fn auto_range(f0: &DistributionModel, tail_mass: f64) -> Result<(f64, f64), QuantError> {
    if !(tail_mass > 0.0 && tail_mass < 0.5) {
        return Err(QuantError::BadTailMass(tail_mass));
    }
    if f0.is_finite_alphabet() {
        return Err(QuantError::DiscreteModel(f0.family_name()));
    }
    let lo = f0.quantile(tail_mass).map_err(|e| QuantError::Invalid(e.to_string()))?;
    let hi = f0.quantile(1.0 - tail_mass).map_err(|e| QuantError::Invalid(e.to_string()))?;
    if !(hi > lo) {
        return Err(QuantError::Invalid(format!("degenerate range [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionModel::*;
    use rand::SeedableRng;

    fn spec_8bit() -> QuantizerSpec {
        QuantizerSpec::from_step(-40.0, 40.0, 0.3125).unwrap()
    }

    #[test]
    fn quantize_edges_and_interior() {
        let q = spec_8bit();
        assert_eq!(q.alphabet, 256);
        assert_eq!(q.quantize(-40.0), 0);
        assert_eq!(q.quantize(0.17), 128); // floor(40.17 / 0.3125)
        assert_eq!(q.quantize(1e6), 255);
        assert_eq!(q.quantize(-1e6), 0);
    }

    #[test]
    fn cell_center_arithmetic() {
        let unit = QuantizerSpec::from_step(0.0, 4.0, 1.0).unwrap();
        assert!((unit.cell_center(0).unwrap() - 0.5).abs() < 1e-15);
        let q = spec_8bit();
        assert!((q.cell_center(128).unwrap() - 0.15625).abs() < 1e-12);
        assert!(q.cell_center(256).is_err());
    }

    #[test]
    fn center_round_trips_to_same_index() {
        let q = spec_8bit();
        for i in 0..q.alphabet {
            assert_eq!(q.quantize(q.cell_center(i).unwrap()), i);
        }
    }

    #[test]
    fn auto_range_gaussian_and_pareto() {
        let g = Gaussian { mean: 0.0, variance: 1.0 };
        // Phi(-2) = 0.0227501...
        let (lo, hi) = auto_range(&g, 0.022750131948179195).unwrap();
        assert!((lo + 2.0).abs() < 1e-6, "lo {lo}");
        assert!((hi - 2.0).abs() < 1e-6, "hi {hi}");

        let p = Pareto { shape: 10.0, scale: 2.0 };
        let (lo, hi) = auto_range(&p, 1e-4).unwrap();
        // Closed-form Pareto quantiles: lo = 2(1 - 1e-4)^(-1/10), hi = 2e4^(1/10) scale.
        assert!((lo - 2.0 * (1.0 - 1e-4f64).powf(-0.1)).abs() < 1e-9);
        assert!((lo - 2.0).abs() < 1e-3);
        assert!((hi - 2.0 * 1e-4f64.powf(-0.1)).abs() < 1e-9);
        assert!((hi - 5.024).abs() < 1e-3, "hi {hi}");

        assert!(auto_range(&g, 0.5).is_err());
        assert!(auto_range(&Bernoulli { p: 0.3 }, 0.1).is_err());
    }

    #[test]
    fn quantized_divergence_below_continuous() {
        // Data-processing inequality over several pairs and step sizes.
        let pairs = [
            (Gaussian { mean: 0.0, variance: 5.0 }, Gaussian { mean: 0.0, variance: 1.0 }),
            (Gaussian { mean: 3.0, variance: 5.0 }, Gaussian { mean: 0.0, variance: 5.0 }),
            (Lognormal { mean: 3.0, variance: 3.0 }, Lognormal { mean: 0.0, variance: 3.0 }),
            (Pareto { shape: 3.0, scale: 2.0 }, Pareto { shape: 10.0, scale: 2.0 }),
        ];
        for (f1, f0) in pairs {
            let d = crate::dist::kl_divergence(&f1, &f0).unwrap().nats;
            for bits in [3, 5, 8] {
                let (lo, hi) = auto_range(&f0, 1e-4).unwrap();
                let spec = QuantizerSpec::from_bits(lo, hi, bits).unwrap();
                let dq = quantized_kl(&f1, &f0, &spec).nats;
                assert!(dq <= d + 1e-9, "{f1:?}||{f0:?} bits {bits}: {dq} > {d}");
            }
        }
    }

    #[test]
    fn quantized_entropy_approaches_differential_entropy() {
        // H(X^D) + log2(D) -> h(X) as the step shrinks; checked empirically
        // on 1e5 Gaussian samples at D in {0.5, 0.25, 0.125}.
        use rand::Rng;
        let g = Gaussian { mean: 0.0, variance: 1.0 };
        let h_bits = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() * LOG2_E;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        let samples: Vec<f64> = (0..100_000).map(|_| g.sample(&mut rng)).collect();
        let mut errors = Vec::new();
        for delta in [0.5, 0.25, 0.125] {
            let spec = QuantizerSpec::from_step(-8.0, 8.0, delta).unwrap();
            let mut counts = vec![0u64; spec.alphabet];
            for x in &samples {
                counts[spec.quantize(*x)] += 1;
            }
            let n = samples.len() as f64;
            let emp_h: f64 = counts
                .iter()
                .filter(|c| **c > 0)
                .map(|c| {
                    let p = *c as f64 / n;
                    -p * p.log2()
                })
                .sum();
            errors.push((emp_h + delta.log2() - h_bits).abs());
            let _ = rng.gen::<u64>();
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "errors {errors:?}");
    }

    #[test]
    fn monotone_in_input() {
        let q = spec_8bit();
        let mut xs: Vec<f64> = (-500..500).map(|i| i as f64 * 0.11).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in xs.windows(2) {
            assert!(q.quantize(w[0]) <= q.quantize(w[1]));
        }
    }
}
