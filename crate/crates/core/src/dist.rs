//! Known probability models: sampling, log-density evaluation and exact KL
//! divergence.
//!
//! These play the roles of the null `f0`/`P0` (always known to every test)
//! and the alternative `f1`/`P1` (known only to the trial simulator and to
//! the SPRT baselines, never to the universal tests).
//!
//! Conventions:
//! - `log_density` is a natural-log density for continuous families and a
//!   natural-log mass for discrete ones; off-support it is `-inf`, never an
//!   error.
//! - The Gaussian's second parameter is the **variance**, not the standard
//!   deviation. Likewise Lognormal carries the underlying Gaussian's mean
//!   and variance.
//! - Pareto uses the density `K * A^K / x^(K+1)` for `x >= A` (shape `K`,
//!   scale `A`).
//! - Divergences are computed in nats internally and carried to bits at the
//!   boundary (`KlResult` holds both).

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// log2(e); multiply nats by this to get bits.
pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Errors from model construction or divergence evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DistError {
    #[error("invalid parameter for {family}: {message}")]
    InvalidParameter { family: &'static str, message: String },
    #[error("kl_divergence requires the same family or two finite-alphabet models, got {p} vs {q}")]
    IncompatibleFamilies { p: &'static str, q: &'static str },
    #[error("operation requires a continuous model, got {family}")]
    NotContinuous { family: &'static str },
}

/// A fully specified sampling model with evaluable log-density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistributionModel {
    /// Gaussian with mean and **variance**.
    Gaussian { mean: f64, variance: f64 },
    /// Lognormal; parameters are the underlying Gaussian's mean and variance.
    Lognormal { mean: f64, variance: f64 },
    /// Pareto with shape `K` and scale `A`: density `K A^K / x^(K+1)`, `x >= A`.
    Pareto { shape: f64, scale: f64 },
    Bernoulli { p: f64 },
    Binomial { trials: u64, p: f64 },
    /// Explicit mass function over alphabet indices `0..len`.
    FinitePmf { probs: Vec<f64> },
}

pub use DistributionModel::*;

/// Tolerance for FinitePmf normalization.
const PMF_SUM_TOL: f64 = 1e-12;

impl DistributionModel {
    /// Validates the family invariants, returning the model on success.
    pub fn validated(self) -> Result<Self, DistError> {
        let bad = |family: &'static str, message: String| Err(DistError::InvalidParameter {
            family,
            message,
        });
        match &self {
            Gaussian { variance, .. } => {
                if !(*variance > 0.0) {
                    return bad("Gaussian", format!("variance must be > 0, got {variance}"));
                }
            }
            Lognormal { variance, .. } => {
                if !(*variance > 0.0) {
                    return bad("Lognormal", format!("variance must be > 0, got {variance}"));
                }
            }
            Pareto { shape, scale } => {
                if !(*shape > 0.0 && *scale > 0.0) {
                    return bad("Pareto", format!("shape and scale must be > 0, got ({shape}, {scale})"));
                }
            }
            Bernoulli { p } | Binomial { p, .. } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return bad("Bernoulli/Binomial", format!("p must be in (0,1), got {p}"));
                }
            }
            FinitePmf { probs } => {
                if probs.is_empty() || probs.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                    return bad("FinitePmf", "entries must be finite and >= 0".into());
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > PMF_SUM_TOL {
                    return bad("FinitePmf", format!("entries must sum to 1, got {sum}"));
                }
            }
        }
        Ok(self)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Gaussian { .. } => "Gaussian",
            Lognormal { .. } => "Lognormal",
            Pareto { .. } => "Pareto",
            Bernoulli { .. } => "Bernoulli",
            Binomial { .. } => "Binomial",
            FinitePmf { .. } => "FinitePmf",
        }
    }

    /// True for the families whose observations live on a finite alphabet.
    pub fn is_finite_alphabet(&self) -> bool {
        matches!(self, Bernoulli { .. } | Binomial { .. } | FinitePmf { .. })
    }

    /// Alphabet size for finite-alphabet families (`None` for continuous).
    pub fn alphabet_size(&self) -> Option<usize> {
        match self {
            Bernoulli { .. } => Some(2),
            Binomial { trials, .. } => Some(*trials as usize + 1),
            FinitePmf { probs } => Some(probs.len()),
            _ => None,
        }
    }

    /// Natural-log density (continuous) or mass (discrete) at `x`.
    ///
    /// Off-support values give `-inf`. Discrete families accept any real that
    /// rounds (within 1e-9) to a supported integer.
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            Gaussian { mean, variance } => {
                -0.5 * (2.0 * std::f64::consts::PI * variance).ln()
                    - (x - mean).powi(2) / (2.0 * variance)
            }
            Lognormal { mean, variance } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lx = x.ln();
                -lx - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
                    - (lx - mean).powi(2) / (2.0 * variance)
            }
            Pareto { shape, scale } => {
                if x < *scale {
                    return f64::NEG_INFINITY;
                }
                shape.ln() + shape * scale.ln() - (shape + 1.0) * x.ln()
            }
            Bernoulli { p } => match as_symbol(x) {
                Some(0) => (1.0 - p).ln(),
                Some(1) => p.ln(),
                _ => f64::NEG_INFINITY,
            },
            Binomial { trials, p } => match as_symbol(x) {
                Some(k) if k <= *trials as usize => {
                    let (n, k) = (*trials as f64, k as f64);
                    ln_choose(*trials, k as u64) + k * p.ln() + (n - k) * (1.0 - p).ln()
                }
                _ => f64::NEG_INFINITY,
            },
            FinitePmf { probs } => match as_symbol(x) {
                Some(i) if i < probs.len() && probs[i] > 0.0 => probs[i].ln(),
                _ => f64::NEG_INFINITY,
            },
        }
    }

    /// One draw. Discrete families return the symbol value as a real.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Gaussian { mean, variance } => {
                let d = rand_distr::Normal::new(*mean, variance.sqrt()).expect("validated");
                d.sample(rng)
            }
            Lognormal { mean, variance } => {
                let d = rand_distr::LogNormal::new(*mean, variance.sqrt()).expect("validated");
                d.sample(rng)
            }
            Pareto { shape, scale } => {
                let d = rand_distr::Pareto::new(*scale, *shape).expect("validated");
                d.sample(rng)
            }
            Bernoulli { p } => {
                if rng.gen::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Binomial { trials, p } => {
                let d = rand_distr::Binomial::new(*trials, *p).expect("validated");
                d.sample(rng) as f64
            }
            FinitePmf { probs } => {
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                for (i, w) in probs.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return i as f64;
                    }
                }
                (probs.len() - 1) as f64
            }
        }
    }

    /// CDF (continuous families and Bernoulli/Binomial/FinitePmf by symbol).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Gaussian { mean, variance } => {
                use statrs::distribution::ContinuousCDF;
                statrs::distribution::Normal::new(*mean, variance.sqrt())
                    .expect("validated")
                    .cdf(x)
            }
            Lognormal { mean, variance } => {
                if x <= 0.0 {
                    return 0.0;
                }
                Gaussian { mean: *mean, variance: *variance }.cdf(x.ln())
            }
            Pareto { shape, scale } => {
                if x < *scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(*shape)
                }
            }
            Bernoulli { p } => {
                if x < 0.0 {
                    0.0
                } else if x < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
            Binomial { trials, p } => {
                use statrs::distribution::DiscreteCDF;
                if x < 0.0 {
                    return 0.0;
                }
                statrs::distribution::Binomial::new(*p, *trials)
                    .expect("validated")
                    .cdf(x.floor() as u64)
            }
            FinitePmf { probs } => {
                if x < 0.0 {
                    return 0.0;
                }
                let k = x.floor() as usize;
                probs.iter().take(k + 1).sum::<f64>().min(1.0)
            }
        }
    }

    /// Quantile for continuous families; used by quantizer auto-ranging.
    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        assert!(p > 0.0 && p < 1.0, "quantile requires p in (0,1)");
        match self {
            Gaussian { mean, variance } => {
                use statrs::distribution::ContinuousCDF;
                Ok(statrs::distribution::Normal::new(*mean, variance.sqrt())
                    .expect("validated")
                    .inverse_cdf(p))
            }
            Lognormal { mean, variance } => {
                let z = Gaussian { mean: 0.0, variance: 1.0 }.quantile(p)?;
                Ok((mean + variance.sqrt() * z).exp())
            }
            Pareto { shape, scale } => Ok(scale * (1.0 - p).powf(-1.0 / shape)),
            other => Err(DistError::NotContinuous { family: other.family_name() }),
        }
    }
}

/// Rounds a real observation to a symbol index when it is within 1e-9 of a
/// nonnegative integer.
pub fn as_symbol(x: f64) -> Option<usize> {
    let r = x.round();
    if (x - r).abs() < 1e-9 && r >= 0.0 && r <= u32::MAX as f64 {
        Some(r as usize)
    } else {
        None
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// How a divergence value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KlMethod {
    ClosedForm,
    /// Exact summation over a finite support.
    DiscreteSum,
    /// Numerical integration; never used silently for a supported pair but
    /// available as an independent cross-check route.
    Quadrature,
}

/// KL divergence `D(P||Q)` in both units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlResult {
    pub nats: f64,
    pub bits: f64,
    pub method: KlMethod,
}

impl KlResult {
    fn new(nats: f64, method: KlMethod) -> Self {
        KlResult { nats, bits: nats * LOG2_E, method }
    }

    pub fn infinite(method: KlMethod) -> Self {
        KlResult { nats: f64::INFINITY, bits: f64::INFINITY, method }
    }
}

/// `D(p||q)`, exact: closed form for same-family pairs, exact summation for
/// finite-alphabet pairs. Incompatible supports give `+inf`; incompatible
/// families are an error.
pub fn kl_divergence(p: &DistributionModel, q: &DistributionModel) -> Result<KlResult, DistError> {
    let closed = |nats: f64| Ok(KlResult::new(nats, KlMethod::ClosedForm));
    match (p, q) {
        (Gaussian { mean: m1, variance: v1 }, Gaussian { mean: m0, variance: v0 })
        | (Lognormal { mean: m1, variance: v1 }, Lognormal { mean: m0, variance: v0 }) => {
            // Lognormal KL equals the underlying Gaussian KL (invariance
            // under the common bijection x -> ln x).
            closed(0.5 * ((v0 / v1).ln() + (v1 + (m1 - m0).powi(2)) / v0 - 1.0))
        }
        (Pareto { shape: k1, scale: a1 }, Pareto { shape: k0, scale: a0 }) => {
            if a1 < a0 {
                // p has mass on [a1, a0) where q has none.
                return Ok(KlResult::infinite(KlMethod::ClosedForm));
            }
            closed((k1 / k0).ln() + k0 * (a1 / a0).ln() + k0 / k1 - 1.0)
        }
        (Bernoulli { p: p1 }, Bernoulli { p: p0 }) => closed(bernoulli_kl_nats(*p1, *p0)),
        (Binomial { trials: n1, p: p1 }, Binomial { trials: n0, p: p0 }) => {
            if n1 == n0 {
                // Sum of iid coordinates: the binomial LLR is linear in the
                // success count, so the divergence is n times the Bernoulli one.
                closed(*n1 as f64 * bernoulli_kl_nats(*p1, *p0))
            } else {
                discrete_kl(p, q)
            }
        }
        _ if p.is_finite_alphabet() && q.is_finite_alphabet() => discrete_kl(p, q),
        _ => Err(DistError::IncompatibleFamilies {
            p: p.family_name(),
            q: q.family_name(),
        }),
    }
}

fn bernoulli_kl_nats(p: f64, q: f64) -> f64 {
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

fn discrete_kl(p: &DistributionModel, q: &DistributionModel) -> Result<KlResult, DistError> {
    let np = p.alphabet_size().expect("finite");
    let nq = q.alphabet_size().expect("finite");
    let mut nats = 0.0;
    for i in 0..np.max(nq) {
        let lp = p.log_density(i as f64);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let lq = q.log_density(i as f64);
        if lq == f64::NEG_INFINITY {
            return Ok(KlResult::infinite(KlMethod::DiscreteSum));
        }
        nats += lp.exp() * (lp - lq);
    }
    Ok(KlResult::new(nats.max(0.0), KlMethod::DiscreteSum))
}

/// Mean and variance, under `p1`, of the per-sample log-likelihood ratio
/// `ln(p1(X)/p0(X))` in nats. The mean equals `D(p1||p0)`.
///
/// Closed forms per family; exact sums for finite alphabets. Feeds the
/// stopping-time asymptotics.
pub fn llr_moments(p1: &DistributionModel, p0: &DistributionModel) -> Result<(f64, f64), DistError> {
    match (p1, p0) {
        (Gaussian { mean: m1, variance: v1 }, Gaussian { mean: m0, variance: v0 })
        | (Lognormal { mean: m1, variance: v1 }, Lognormal { mean: m0, variance: v0 }) => {
            // l(x) = const + b x + c x^2 with x ~ N(m1, v1) (for Lognormal,
            // in terms of ln x, same law).
            let c = 0.5 / v0 - 0.5 / v1;
            let b = m1 / v1 - m0 / v0;
            let var = b * b * v1 + 2.0 * c * c * v1 * v1 + 4.0 * b * c * m1 * v1;
            let mean = kl_divergence(p1, p0)?.nats;
            Ok((mean, var))
        }
        (Pareto { shape: k1, scale: a1 }, Pareto { shape: k0, scale: a0 }) => {
            if a1 < a0 {
                return Ok((f64::INFINITY, f64::INFINITY));
            }
            // l(x) = const + (k0 - k1) ln x, and ln(x/a1) ~ Exp(k1) under p1.
            let var = ((k0 - k1) / k1).powi(2);
            let mean = kl_divergence(p1, p0)?.nats;
            Ok((mean, var))
        }
        _ if p1.is_finite_alphabet() && p0.is_finite_alphabet() => {
            let n1 = p1.alphabet_size().expect("finite");
            let n0 = p0.alphabet_size().expect("finite");
            let mut mean = 0.0;
            let mut second = 0.0;
            for i in 0..n1.max(n0) {
                let lp = p1.log_density(i as f64);
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let lq = p0.log_density(i as f64);
                if lq == f64::NEG_INFINITY {
                    return Ok((f64::INFINITY, f64::INFINITY));
                }
                let w = lp.exp();
                let l = lp - lq;
                mean += w * l;
                second += w * l * l;
            }
            Ok((mean, (second - mean * mean).max(0.0)))
        }
        _ => Err(DistError::IncompatibleFamilies {
            p: p1.family_name(),
            q: p0.family_name(),
        }),
    }
}

/// Quadrature route for `D(p||q)` over continuous same-family pairs.
///
/// Integrates the log ratio in the quantile domain,
/// `D = int_0^1 log(p/q)(F_p^{-1}(t)) dt`, which stays well conditioned for
/// heavy-tailed supports. This is the independent cross-check for the
/// closed forms, not the production path.
pub fn kl_quadrature(p: &DistributionModel, q: &DistributionModel, panels: usize) -> Result<KlResult, DistError> {
    if p.is_finite_alphabet() || q.is_finite_alphabet() {
        return Err(DistError::NotContinuous { family: p.family_name() });
    }
    let eps = 1e-9;
    let f = |t: f64| -> Result<f64, DistError> {
        let x = p.quantile(t)?;
        let lp = p.log_density(x);
        let lq = q.log_density(x);
        if lq == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        Ok(lp - lq)
    };
    let n = panels.max(8) & !1; // even
    let h = (1.0 - 2.0 * eps) / n as f64;
    let mut acc = f(eps)? + f(1.0 - eps)?;
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(eps + i as f64 * h)?;
    }
    Ok(KlResult::new(acc * h / 3.0, KlMethod::Quadrature))
}
