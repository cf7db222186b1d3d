//! Closed-form and semi-analytical predictions for the sequential tests and
//! the decentralized network, cross-checkable against simulation.
//!
//! - Single-node asymptotic slopes: `E_0[N]/|log2 beta| -> 2/lambda` and
//!   `E_1[N]/|log2 alpha| -> 1/delta` with `delta = D(P1||P0) - lambda/2`.
//! - The Gaussian stopping-time law `N ~ N(gamma/delta, rho^2 gamma/delta^3)`.
//! - Expected order statistics of the per-node decision times (independent,
//!   generally non-identical Gaussians) by numerical integration of the
//!   Poisson-binomial order-statistic CDF, with a Monte Carlo fallback.
//! - The piecewise-drift delay recursion and the two-term decentralized
//!   delay prediction.
//! - A semi-analytical miss-detection estimate `P_1(N_d^0 < t_1)`: the
//!   pre-transmission fusion walk's lower-barrier crossing time is simulated
//!   and integrated against the Gaussian law of the first local decision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::decentralized::{fusion_llr_bits, NetworkError};
use crate::dist::{kl_divergence, llr_moments, DistributionModel, LOG2_E};
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TheoryError {
    #[error("alternative is outside class C: D(P1||P0) = {d_bits} bits < lambda = {lambda_bits} bits")]
    OutsideClassC { d_bits: f64, lambda_bits: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("no switch index satisfies the positive-drift condition")]
    NoSwitchIndex,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0}")]
    Dist(String),
}

/// Per-node asymptotic quantities, all in bits (or bits^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeAsymptotics {
    /// `D(P1||P0) - lambda/2` (the H1 drift).
    pub delta_bits: f64,
    /// `Var_1[log2 P1/P0]`.
    pub rho2_bits2: f64,
    /// `E_0[N] / |log2 beta|` limit: `2 / lambda`.
    pub e0_slope: f64,
    /// `E_1[N] / |log2 alpha|` limit: `1 / delta`.
    pub e1_slope: f64,
}

/// Slopes and drift/variance for a known pair; errors if the pair violates
/// class C (`D >= lambda`).
pub fn single_node_slopes(
    p0: &DistributionModel,
    p1: &DistributionModel,
    lambda_bits: f64,
) -> Result<NodeAsymptotics, TheoryError> {
    if !(lambda_bits > 0.0) {
        return Err(TheoryError::Invalid(format!("lambda must be > 0, got {lambda_bits}")));
    }
    let d_bits = kl_divergence(p1, p0).map_err(|e| TheoryError::Dist(e.to_string()))?.bits;
    if d_bits < lambda_bits {
        return Err(TheoryError::OutsideClassC { d_bits, lambda_bits });
    }
    let (_, var_nats) = llr_moments(p1, p0).map_err(|e| TheoryError::Dist(e.to_string()))?;
    let delta_bits = d_bits - lambda_bits / 2.0;
    Ok(NodeAsymptotics {
        delta_bits,
        rho2_bits2: var_nats * LOG2_E * LOG2_E,
        e0_slope: 2.0 / lambda_bits,
        e1_slope: 1.0 / delta_bits,
    })
}

/// Gaussian law for a local H1 stopping time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianLaw {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianLaw {
    pub fn cdf(&self, x: f64) -> f64 {
        if self.sd == 0.0 {
            return if x >= self.mean { 1.0 } else { 0.0 };
        }
        normal_cdf((x - self.mean) / self.sd)
    }
}

/// `N_l^1 ~ N(gamma/delta, rho^2 gamma / delta^3)`.
pub fn stopping_time_law(gamma_bits: f64, delta_bits: f64, rho2_bits2: f64) -> Result<GaussianLaw, TheoryError> {
    if !(gamma_bits > 0.0 && delta_bits > 0.0) || rho2_bits2 < 0.0 {
        return Err(TheoryError::Invalid(format!(
            "need gamma > 0, delta > 0, rho2 >= 0; got ({gamma_bits}, {delta_bits}, {rho2_bits2})"
        )));
    }
    Ok(GaussianLaw {
        mean: gamma_bits / delta_bits,
        sd: (rho2_bits2 * gamma_bits / delta_bits.powi(3)).sqrt(),
    })
}

/// `P(t_1 > x)` for the minimum of independent Gaussians.
pub fn first_order_stat_survival(laws: &[GaussianLaw], x: f64) -> f64 {
    laws.iter().map(|l| 1.0 - l.cdf(x)).product()
}

/// Expected order statistics `E[t_1] <= ... <= E[t_L]` of independent,
/// generally non-identical Gaussians.
///
/// Numerical integration of
/// `E[t_j] = int_0^inf (1 - F_(j)) dx - int_{-inf}^0 F_(j) dx`
/// with `F_(j)` the Poisson-binomial order-statistic CDF; degenerate laws
/// fall back to a seeded Monte Carlo average.
pub fn expected_order_stats(laws: &[GaussianLaw]) -> Result<Vec<f64>, TheoryError> {
    if laws.is_empty() {
        return Err(TheoryError::Invalid("need at least one law".into()));
    }
    if laws.iter().any(|l| !(l.sd > 0.0)) {
        return Ok(mc_order_stats(laws, 1_000_000, 0x0d0e));
    }
    let lo = laws.iter().map(|l| l.mean - 10.0 * l.sd).fold(f64::INFINITY, f64::min);
    let hi = laws.iter().map(|l| l.mean + 10.0 * l.sd).fold(f64::NEG_INFINITY, f64::max);
    let l = laws.len();
    let mut acc = vec![0.0; l];

    // E[X_(j)] = int_0^inf (1 - F_(j)) dx - int_{-inf}^0 F_(j) dx, with each
    // piece clipped to where F_(j) is not flat. Composite Simpson, all order
    // indices accumulated in one sweep.
    let mut simpson = |a: f64, b: f64, positive_part: bool| {
        if !(b > a) {
            return;
        }
        let panels = 8192usize;
        let h = (b - a) / panels as f64;
        let mut cdf_j = vec![0.0; l];
        for i in 0..=panels {
            let x = a + i as f64 * h;
            let weight = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            order_stat_cdfs(laws, x, &mut cdf_j);
            for (acc_j, cdf) in acc.iter_mut().zip(&cdf_j) {
                let f = if positive_part { 1.0 - cdf } else { -cdf };
                *acc_j += weight * f * h / 3.0;
            }
        }
    };
    simpson(lo.max(0.0), hi, true);
    simpson(lo, hi.min(0.0), false);
    // Flat stretches outside [lo, hi]: (1 - F) == 1 on [0, lo] when the whole
    // range is positive; -F == -1 on [hi, 0] when it is negative.
    if lo > 0.0 {
        for a in &mut acc {
            *a += lo;
        }
    }
    if hi < 0.0 {
        for a in &mut acc {
            *a += hi;
        }
    }
    Ok(acc)
}

/// Poisson-binomial order-statistic CDFs at one point:
/// `out[j-1] = P(at least j of the laws are <= x)`.
fn order_stat_cdfs(laws: &[GaussianLaw], x: f64, out: &mut [f64]) {
    let l = laws.len();
    // dp[k] = P(exactly k of the first m laws are <= x).
    let mut dp = vec![0.0; l + 1];
    dp[0] = 1.0;
    for (m, law) in laws.iter().enumerate() {
        let p = law.cdf(x);
        for k in (0..=m).rev() {
            dp[k + 1] += dp[k] * p;
            dp[k] *= 1.0 - p;
        }
    }
    // Tail sums: P(count >= j).
    let mut tail = 0.0;
    for j in (1..=l).rev() {
        tail += dp[j];
        out[j - 1] = tail.min(1.0);
    }
}

/// Monte Carlo oracle for the order-statistic means (also the fallback for
/// degenerate laws). Deterministic for a fixed seed.
pub fn mc_order_stats(laws: &[GaussianLaw], draws: u64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let l = laws.len();
    let mut sums = vec![0.0; l];
    let mut sample = vec![0.0; l];
    let normal = rand_distr::StandardNormal;
    for _ in 0..draws {
        for (s, law) in sample.iter_mut().zip(laws) {
            let z: f64 = rng.sample(normal);
            *s = law.mean + law.sd * z;
        }
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (acc, v) in sums.iter_mut().zip(&sample) {
            *acc += v;
        }
    }
    sums.iter().map(|s| s / draws as f64).collect()
}

/// Fusion drift (bits/slot) when the coherent sum of transmissions has mean
/// `y_mean`: `E[log2 g_{mu1}(y_mean + Z) / g_{-mu0}(y_mean + Z)]`.
pub fn fc_drift_bits(
    noise: &DistributionModel,
    mu1: f64,
    mu0: f64,
    y_mean: f64,
) -> Result<f64, TheoryError> {
    match noise {
        DistributionModel::Gaussian { mean, .. } => {
            // E[(y+mu0)^2 - (y-mu1)^2]/(2 s^2): the quadratic noise terms
            // cancel, leaving the closed form evaluated at the mean level.
            Ok(fusion_llr_bits(noise, mu1, mu0, y_mean + mean)?)
        }
        DistributionModel::FinitePmf { probs } => {
            let mut acc = 0.0;
            for (i, w) in probs.iter().enumerate() {
                if *w > 0.0 {
                    acc += w * fusion_llr_bits(noise, mu1, mu0, y_mean + i as f64)?;
                }
            }
            Ok(acc)
        }
        continuous => {
            let a = continuous.quantile(1e-10).map_err(|e| TheoryError::Dist(e.to_string()))?;
            let b = continuous.quantile(1.0 - 1e-10).map_err(|e| TheoryError::Dist(e.to_string()))?;
            let panels = 16384usize;
            let h = (b - a) / panels as f64;
            let mut acc = 0.0;
            for i in 0..=panels {
                let z = a + i as f64 * h;
                let weight = if i == 0 || i == panels {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let dens = continuous.log_density(z).exp();
                if dens > 0.0 {
                    acc += weight * dens * fusion_llr_bits(continuous, mu1, mu0, y_mean + z)?;
                }
            }
            Ok(acc * h / 3.0)
        }
    }
}

/// Output of the piecewise-drift delay analysis.
#[derive(Debug, Clone, Serialize)]
pub struct DelayPrediction {
    /// `E[t_j]`, `j = 1..=L`.
    pub expected_t: Vec<f64>,
    /// Running means `F_bar_j` of the fusion statistic just before `t_j`.
    pub fbar: Vec<f64>,
    /// Switch index `l*` (1-based) where the drift has just turned positive.
    pub switch_index: usize,
    /// Two-term prediction of `E_1[N_d]`.
    pub expected_delay: f64,
}

/// Runs the `F_bar` recursion over the expected order statistics and drifts
/// `delta_fc[j]` = fusion drift with `j` transmitting nodes (`j = 0..=L`),
/// finds the switch index and returns the two-term delay prediction.
///
/// The mean fusion level accumulated over `(t_{j-1}, t_j]` uses the drift
/// with `j-1` transmitters — the drift only changes *at* `t_j`.
pub fn predict_delay(
    expected_t: &[f64],
    delta_fc: &[f64],
    beta1_bits: f64,
) -> Result<DelayPrediction, TheoryError> {
    let l = expected_t.len();
    if l == 0 || delta_fc.len() != l + 1 {
        return Err(TheoryError::Invalid(format!(
            "need L >= 1 expected times and L+1 drifts, got {l} and {}",
            delta_fc.len()
        )));
    }
    if !(beta1_bits > 0.0) {
        return Err(TheoryError::Invalid("beta1 must be positive".into()));
    }
    let mut fbar = vec![0.0; l + 1];
    for j in 1..=l {
        let prev_t = if j == 1 { 0.0 } else { expected_t[j - 2] };
        fbar[j] = fbar[j - 1] + delta_fc[j - 1] * (expected_t[j - 1] - prev_t);
    }
    let mut switch_index = None;
    for j in 1..=l {
        if delta_fc[j] <= 0.0 {
            continue;
        }
        let time_to_cross = (beta1_bits - fbar[j]) / delta_fc[j];
        let gap = if j == l {
            f64::INFINITY
        } else {
            expected_t[j] - expected_t[j - 1]
        };
        if time_to_cross < gap {
            switch_index = Some(j);
            break;
        }
    }
    let j = switch_index.ok_or(TheoryError::NoSwitchIndex)?;
    let expected_delay = expected_t[j - 1] + (beta1_bits - fbar[j]) / delta_fc[j];
    Ok(DelayPrediction {
        expected_t: expected_t.to_vec(),
        fbar: fbar[1..].to_vec(),
        switch_index: j,
        expected_delay,
    })
}

/// Semi-analytical miss-detection estimate `P_1(N_d^0 < t_1)`.
///
/// Simulates the pre-transmission fusion walk (`Y = Z` alone) and weighs
/// each lower-barrier crossing at slot `T` by the probability that no node
/// has decided yet, `P(t_1 > T)` from the Gaussian stopping-time laws.
pub fn predict_pmd(
    laws: &[GaussianLaw],
    noise: &DistributionModel,
    mu1: f64,
    mu0: f64,
    beta0_bits: f64,
    walks: u64,
    seed: u64,
) -> Result<f64, TheoryError> {
    if laws.is_empty() {
        return Err(TheoryError::Invalid("need at least one law".into()));
    }
    if !(beta0_bits > 0.0) {
        return Err(TheoryError::Invalid("beta0 must be positive".into()));
    }
    // t_1 is the minimum: its upper range is capped by the smallest per-law
    // upper quantile.
    let t_max = laws
        .iter()
        .map(|l| l.mean + 8.0 * l.sd)
        .fold(f64::INFINITY, f64::min)
        .ceil()
        .max(1.0) as u64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..walks {
        let mut f = 0.0;
        for k in 1..=t_max {
            let z = noise.sample(&mut rng);
            f += fusion_llr_bits(noise, mu1, mu0, z)?;
            if f <= -beta0_bits {
                total += first_order_stat_survival(laws, k as f64);
                break;
            }
        }
    }
    Ok(total / walks as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionModel::*;

    #[test]
    fn slopes_trivial_values() {
        let p0 = Binomial { trials: 8, p: 0.2 };
        let p1 = Binomial { trials: 8, p: 0.5 };
        let asym = single_node_slopes(&p0, &p1, 2.0).unwrap();
        assert!((asym.e0_slope - 1.0).abs() < 1e-12);
        // delta for the Table pair at lambda = 1.2078.
        let asym = single_node_slopes(&p0, &p1, 1.2078).unwrap();
        let d = kl_divergence(&p1, &p0).unwrap().bits;
        assert!((asym.delta_bits - (d - 0.6039)).abs() < 1e-9);
        assert!((asym.delta_bits - (2.5754 - 0.6039)).abs() < 1e-3);
    }

    #[test]
    fn slopes_reject_outside_class_c() {
        let p0 = Bernoulli { p: 0.2 };
        let p1 = Bernoulli { p: 0.5 };
        // D = 0.32 bits < lambda = 1.
        assert!(matches!(
            single_node_slopes(&p0, &p1, 1.0),
            Err(TheoryError::OutsideClassC { .. })
        ));
    }

    #[test]
    fn stopping_law_parameters() {
        let law = stopping_time_law(40.0, 1.0, 1.0).unwrap();
        assert!((law.mean - 40.0).abs() < 1e-12);
        assert!((law.sd - 40.0f64.sqrt()).abs() < 1e-12);
        let degenerate = stopping_time_law(40.0, 2.0, 0.0).unwrap();
        assert_eq!(degenerate.sd, 0.0);
        assert!((degenerate.mean - 20.0).abs() < 1e-12);
    }

    #[test]
    fn order_stats_single_law_is_mean() {
        let laws = [GaussianLaw { mean: 12.5, sd: 3.0 }];
        let e = expected_order_stats(&laws).unwrap();
        assert!((e[0] - 12.5).abs() < 1e-3, "{e:?}");
    }

    #[test]
    fn order_stats_two_iid_standard_normals() {
        // E[min] = -1/sqrt(pi), E[max] = +1/sqrt(pi).
        let laws = [GaussianLaw { mean: 0.0, sd: 1.0 }; 2];
        let e = expected_order_stats(&laws).unwrap();
        let v = 1.0 / std::f64::consts::PI.sqrt();
        assert!((e[0] + v).abs() < 1e-3, "min {e:?}");
        assert!((e[1] - v).abs() < 1e-3, "max {e:?}");
    }

    #[test]
    fn order_stats_match_monte_carlo() {
        let laws = [
            GaussianLaw { mean: 30.0, sd: 5.0 },
            GaussianLaw { mean: 45.0, sd: 9.0 },
            GaussianLaw { mean: 38.0, sd: 2.0 },
            GaussianLaw { mean: 33.0, sd: 7.0 },
            GaussianLaw { mean: 50.0, sd: 4.0 },
        ];
        for l in [2usize, 3, 5] {
            let sub = &laws[..l];
            let exact = expected_order_stats(sub).unwrap();
            let draws = 1_000_000u64;
            let mc = mc_order_stats(sub, draws, 99);
            // 3 standard errors of the MC mean; the spread of any order
            // statistic is below the largest per-law sd.
            let se = 3.0 * 9.0 / (draws as f64).sqrt();
            for (a, b) in exact.iter().zip(&mc) {
                assert!((a - b).abs() < 3.0 * se + 1e-3, "L={l}: exact {exact:?} mc {mc:?}");
            }
            // Order statistics are monotone in j.
            for w in exact.windows(2) {
                assert!(w[0] <= w[1] + 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_law_falls_back_to_monte_carlo() {
        let laws = [
            GaussianLaw { mean: 10.0, sd: 0.0 },
            GaussianLaw { mean: 20.0, sd: 0.0 },
        ];
        let e = expected_order_stats(&laws).unwrap();
        assert!((e[0] - 10.0).abs() < 1e-9);
        assert!((e[1] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn fbar_recursion_telescopes() {
        let expected_t = [10.0, 25.0, 31.0];
        let drifts = [-0.5, -0.2, 0.8, 2.0];
        let pred = predict_delay(&expected_t, &drifts, 6.0).unwrap();
        // Direct telescoped sum with the drift-before-t_j convention.
        let mut direct = Vec::new();
        let mut acc = 0.0;
        for j in 1..=3usize {
            let prev = if j == 1 { 0.0 } else { expected_t[j - 2] };
            acc += drifts[j - 1] * (expected_t[j - 1] - prev);
            direct.push(acc);
        }
        for (a, b) in pred.fbar.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delay_collapses_for_single_node() {
        // L=1: prediction = gamma/delta + beta/Delta(A^1), with a zero
        // pre-transmission drift (symmetric Gaussian noise).
        let gamma = 40.0;
        let delta = 1.25;
        let law = stopping_time_law(gamma, delta, 2.0).unwrap();
        let noise = Gaussian { mean: 0.0, variance: 1.0 };
        let (mu, b) = (2.0, 2.0);
        let d0 = fc_drift_bits(&noise, mu, mu, 0.0).unwrap();
        assert!(d0.abs() < 1e-9, "pre-transmission drift {d0}");
        let d1 = fc_drift_bits(&noise, mu, mu, b).unwrap();
        assert!((d1 - 2.0 * mu * b * LOG2_E).abs() < 1e-9);
        let e_t = expected_order_stats(&[law]).unwrap();
        let beta = 12.0;
        let pred = predict_delay(&e_t, &[d0, d1], beta).unwrap();
        assert_eq!(pred.switch_index, 1);
        let expect = gamma / delta + beta / d1;
        assert!((pred.expected_delay - expect).abs() < 2e-3, "{} vs {expect}", pred.expected_delay);
    }

    #[test]
    fn delay_huge_drifts_reduce_to_first_decision() {
        let expected_t = [30.0, 40.0, 55.0];
        let pred = predict_delay(&expected_t, &[0.0, 1e9, 1e9, 1e9], 10.0).unwrap();
        assert_eq!(pred.switch_index, 1);
        assert!((pred.expected_delay - 30.0).abs() < 1e-6);
    }

    #[test]
    fn pmd_unreachable_barrier_is_zero() {
        let laws = [GaussianLaw { mean: 50.0, sd: 5.0 }];
        let noise = Gaussian { mean: 0.0, variance: 1.0 };
        let p = predict_pmd(&laws, &noise, 2.0, 2.0, 1e9, 2_000, 1).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn pmd_deterministic_walk_reduction() {
        // Asymmetric mus with tiny relative noise: the walk drifts down
        // almost deterministically, crossing at ceil(beta0/|drift|); the
        // prediction then equals P(t_1 > crossing slot).
        let noise = Gaussian { mean: 0.0, variance: 1e-4 };
        let (mu1, mu0) = (2.0, 1.0);
        let drift = fc_drift_bits(&noise, mu1, mu0, 0.0).unwrap();
        assert!(drift < 0.0);
        let beta0 = drift.abs() * 7.3;
        let crossing = (beta0 / drift.abs()).ceil(); // 8 slots
        let laws = [GaussianLaw { mean: 10.0, sd: 2.0 }];
        let expect = first_order_stat_survival(&laws, crossing);
        let p = predict_pmd(&laws, &noise, mu1, mu0, beta0, 4_000, 7).unwrap();
        assert!((p - expect).abs() < 0.02, "p {p} expect {expect}");
    }
}
