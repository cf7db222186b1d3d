//! Helpers for the comparison baselines: the Hoeffding fixed-sample test's
//! type statistic and sample-size equation, and the 1-NN / kernel-density
//! estimators plugged into the sequential statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::dist::{kl_divergence, llr_moments, DistributionModel, LOG2_E};
use crate::seq::SeqError;

/// Euler-Mascheroni constant (the 1-NN entropy estimator's bias correction).
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Divergence in bits between the empirical type of `counts` and `p0`.
pub fn type_divergence_bits(counts: &[u64], p0: &DistributionModel) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let mut nats = 0.0;
    for (i, c) in counts.iter().enumerate() {
        if *c == 0 {
            continue;
        }
        let g = *c as f64 / n as f64;
        let lp = p0.log_density(i as f64);
        if lp == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        nats += g * (g.ln() - lp);
    }
    nats.max(0.0) * LOG2_E
}

/// Hoeffding-test sample size achieving the target error pair, from the
/// chi-squared null asymptotic and Gaussian alternative asymptotic:
/// `2 n D + 2 sqrt(n) F_N^{-1}(P_MD) - F_chi^{-1}(1 - P_FA) = 0`
/// with `F_N` the CDF of `N(0, sigma1^2)`, `sigma1^2 = Var_1[log P1/P0]`,
/// and `N - 1` chi-squared degrees of freedom over an `N`-symbol alphabet.
///
/// Returns the smallest positive root (a real; callers round up).
pub fn hoeffding_sample_size(
    p0: &DistributionModel,
    p1: &DistributionModel,
    p_fa: f64,
    p_md: f64,
) -> Result<f64, SeqError> {
    if !(p_fa > 0.0 && p_fa < 1.0 && p_md > 0.0 && p_md < 1.0) {
        return Err(SeqError::InvalidConfig(format!("error targets must be in (0,1), got {p_fa}/{p_md}")));
    }
    let alphabet = p0
        .alphabet_size()
        .ok_or_else(|| SeqError::InvalidConfig("Hoeffding test needs a finite alphabet".into()))?;
    let d = kl_divergence(p1, p0)
        .map_err(|e| SeqError::InvalidConfig(e.to_string()))?
        .nats;
    if !(d > 0.0) || !d.is_finite() {
        return Err(SeqError::Unreachable(format!("need 0 < D(P1||P0) < inf, got {d}")));
    }
    let (_, var) = llr_moments(p1, p0).map_err(|e| SeqError::InvalidConfig(e.to_string()))?;
    let sigma1 = var.sqrt();
    let z_md = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p_md);
    let q = ChiSquared::new((alphabet - 1) as f64)
        .map_err(|e| SeqError::InvalidConfig(e.to_string()))?
        .inverse_cdf(1.0 - p_fa);
    // Quadratic in u = sqrt(n): 2 d u^2 + 2 sigma1 z u - q = 0.
    let disc = sigma1 * sigma1 * z_md * z_md + 2.0 * d * q;
    let u = (-sigma1 * z_md + disc.sqrt()) / (2.0 * d);
    if !(u > 0.0) || !u.is_finite() {
        return Err(SeqError::Unreachable(format!(
            "no positive sample size for targets ({p_fa}, {p_md})"
        )));
    }
    Ok(u * u)
}

/// Threshold (bits) pairing with [`hoeffding_sample_size`]: the null
/// chi-squared asymptotic gives `eta = F_chi^{-1}(1 - P_FA) / (2n)` nats.
pub fn hoeffding_threshold_bits(p0: &DistributionModel, p_fa: f64, n: u64) -> Result<f64, SeqError> {
    let alphabet = p0
        .alphabet_size()
        .ok_or_else(|| SeqError::InvalidConfig("Hoeffding test needs a finite alphabet".into()))?;
    let q = ChiSquared::new((alphabet - 1) as f64)
        .map_err(|e| SeqError::InvalidConfig(e.to_string()))?
        .inverse_cdf(1.0 - p_fa);
    Ok(q / (2.0 * n as f64) * LOG2_E)
}

/// Silverman's rule bandwidth for a Gaussian kernel under a Gaussian target:
/// `(4 sigma^5 / (3 n))^(1/5)`.
pub fn kde_bandwidth(sigma: f64, n: u64) -> f64 {
    (4.0 * sigma.powi(5) / (3.0 * n as f64)).powf(0.2)
}

/// Natural log of the Gaussian-kernel density estimate at `z`.
pub fn kde_log_density(points: &[f64], h: f64, z: f64) -> f64 {
    let n = points.len() as f64;
    let mut acc = 0.0;
    for x in points {
        let u = (z - x) / h;
        acc += (-0.5 * u * u).exp();
    }
    (acc / (n * h * (2.0 * std::f64::consts::PI).sqrt())).ln()
}
