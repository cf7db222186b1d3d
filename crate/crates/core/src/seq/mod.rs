//! Single-node sequential (and fixed-sample) tests.
//!
//! All statistics, thresholds and the drift parameter lambda are in **bits**;
//! codelengths are natively binary and mixing log bases is the easiest way
//! to corrupt a threshold. The SPRT statistic is
//! `W_n = sum log2(P1(X_k)/P0(X_k))`, stopped outside
//! `(log2 beta, -log2 alpha)`. The universal variants replace the unknown
//! numerator with a universal codelength:
//!
//! - finite alphabet: `W_n = -L_n - log2 P0(X_1^n) - n*lambda/2`;
//! - continuous (LZSLRT / KTSLRT): quantize first, then
//!   `W_n = -L_n(X^D) - n log2 D - sum log2 f0(X_k) - n*lambda/2`, with the
//!   LZ variant additionally subtracting its redundancy envelope.
//!
//! A modified finite-alphabet rule set exploits the known null stopping time
//! `N0 = |log2 beta| / (lambda/2)` to stop idle tests and veto implausibly
//! early H0 decisions.
//!
//! Cap hits are a third outcome, never counted as a decision. A decided
//! state is frozen: further `step` calls do not mutate it.

pub mod baselines;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{lz_redundancy, Coder, CoderKind};
use crate::dist::{as_symbol, DistributionModel, LOG2_E};
use crate::quant::QuantizerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status {
    Running,
    Decided(Decision),
    Capped,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SeqError {
    #[error("observation {x} lies outside the support of both hypotheses")]
    OffBothSupports { x: f64 },
    #[error("invalid test configuration: {0}")]
    InvalidConfig(String),
    #[error("error targets unreachable: {0}")]
    Unreachable(String),
}

/// Two-sided stopping thresholds in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `-log2 alpha`, > 0; crossing decides H1.
    pub upper_bits: f64,
    /// `log2 beta`, < 0; crossing decides H0.
    pub lower_bits: f64,
}

impl Thresholds {
    pub fn new(upper_bits: f64, lower_bits: f64) -> Result<Self, SeqError> {
        if !(upper_bits > 0.0 && lower_bits < 0.0) {
            return Err(SeqError::InvalidConfig(format!(
                "thresholds must straddle zero, got upper {upper_bits}, lower {lower_bits}"
            )));
        }
        Ok(Thresholds { upper_bits, lower_bits })
    }

    /// Symmetric `(-gamma, gamma)` interval.
    pub fn symmetric(gamma_bits: f64) -> Result<Self, SeqError> {
        Self::new(gamma_bits, -gamma_bits)
    }

    /// From target error probabilities: upper `= -log2 alpha`,
    /// lower `= log2 beta`.
    pub fn from_error_probs(alpha: f64, beta: f64) -> Result<Self, SeqError> {
        if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
            return Err(SeqError::InvalidConfig(format!("alpha/beta must be in (0,1), got {alpha}/{beta}")));
        }
        Self::new(-alpha.log2(), beta.log2())
    }
}

/// Sample-count tolerance band for the modified finite-alphabet test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ToleranceSchedule {
    /// `scale * (0.5 * |A| * log2 n + 2)` — the KT redundancy envelope.
    KtEnvelope { alphabet: usize, scale: f64 },
    /// `scale * n * lz_redundancy(n, c)` — the LZ78 redundancy envelope.
    LzEnvelope { c: f64, scale: f64 },
    Constant(f64),
}

impl ToleranceSchedule {
    pub fn eval(&self, n: u64) -> f64 {
        match self {
            ToleranceSchedule::KtEnvelope { alphabet, scale } => {
                scale * (0.5 * *alphabet as f64 * (n.max(1) as f64).log2() + 2.0)
            }
            ToleranceSchedule::LzEnvelope { c, scale } => scale * n as f64 * lz_redundancy(n, *c),
            ToleranceSchedule::Constant(v) => *v,
        }
    }
}

/// Which statistic a test runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    /// Classical SPRT; the only sequential variant given `p1`.
    Sprt { p0: DistributionModel, p1: DistributionModel },
    /// Finite-alphabet universal test with a pluggable coder.
    UnivFinite { p0: DistributionModel, coder: CoderKind },
    /// Finite-alphabet universal test plus the three modified stopping rules
    /// (requires a symmetric threshold regime).
    UnivFiniteModified {
        p0: DistributionModel,
        coder: CoderKind,
        tolerance: ToleranceSchedule,
    },
    /// Continuous-alphabet LZ78 test with redundancy correction.
    Lzslrt {
        f0: DistributionModel,
        quantizer: QuantizerSpec,
        redundancy_c: f64,
        /// Multiply the redundancy term by n (the inequality form) instead of
        /// subtracting it once (the printed statistic). Default false.
        redundancy_times_n: bool,
    },
    /// Continuous-alphabet KT-AE test; `shift` is the S constant.
    Ktslrt { f0: DistributionModel, quantizer: QuantizerSpec, shift: f64 },
    /// Fixed-sample-size Hoeffding test: H1 iff `D(type || p0) >= eta`.
    Hoeffding { p0: DistributionModel, eta_bits: f64, sample_size: u64 },
    /// Sequential test plugging the 1-NN differential entropy estimate in
    /// for the unknown `sum log f1`.
    Nn1Entropy { f0: DistributionModel },
    /// Sequential test plugging a Gaussian-kernel density estimate in for
    /// the unknown `f1`.
    Kde { f0: DistributionModel },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Sprt { .. } => "sprt",
            Variant::UnivFinite { .. } => "univ_finite",
            Variant::UnivFiniteModified { .. } => "univ_finite_modified",
            Variant::Lzslrt { .. } => "lzslrt",
            Variant::Ktslrt { .. } => "ktslrt",
            Variant::Hoeffding { .. } => "hoeffding",
            Variant::Nn1Entropy { .. } => "nn1_entropy",
            Variant::Kde { .. } => "kde",
        }
    }

    /// Universal variants never see `f1`/`P1`.
    pub fn knows_alternative(&self) -> bool {
        matches!(self, Variant::Sprt { .. })
    }
}

/// Full sequential-test parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub thresholds: Thresholds,
    /// Drift design parameter in bits; must be positive for the variants
    /// that use it (ignored by SPRT and Hoeffding).
    pub lambda_bits: f64,
    /// Safety cap on samples; hitting it is reported as a distinct outcome.
    pub max_samples: u64,
    pub variant: Variant,
}

impl TestConfig {
    pub fn validate(&self) -> Result<(), SeqError> {
        if self.max_samples == 0 {
            return Err(SeqError::InvalidConfig("max_samples must be >= 1".into()));
        }
        let needs_lambda = !matches!(self.variant, Variant::Sprt { .. } | Variant::Hoeffding { .. });
        if needs_lambda && !(self.lambda_bits > 0.0) {
            return Err(SeqError::InvalidConfig(format!(
                "lambda must be > 0 bits, got {}",
                self.lambda_bits
            )));
        }
        if let Variant::UnivFiniteModified { .. } = self.variant {
            let t = self.thresholds;
            if (t.upper_bits + t.lower_bits).abs() > 1e-9 {
                return Err(SeqError::InvalidConfig(
                    "the modified test is defined for the symmetric (alpha = beta) regime".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Sprt {
        p0: DistributionModel,
        p1: DistributionModel,
    },
    UnivFinite {
        log2_p0: Vec<f64>,
        coder: Coder,
        /// Modified-test add-on: `(N0, schedule)`.
        modified: Option<(f64, ToleranceSchedule)>,
    },
    Continuous {
        f0: DistributionModel,
        quantizer: QuantizerSpec,
        coder: Coder,
        /// LZ redundancy correction (c, times_n); `None` for KTSLRT.
        lz_correction: Option<(f64, bool)>,
        sum_log2_f0: f64,
    },
    Hoeffding {
        p0: DistributionModel,
        eta_bits: f64,
        sample_size: u64,
        counts: Vec<u64>,
        off_support: bool,
    },
    Nn1 {
        f0: DistributionModel,
        points: Vec<f64>,
        nn_dist: Vec<f64>,
        sum_ln_rho: f64,
        sum_ln_f0: f64,
    },
    Kde {
        f0: DistributionModel,
        points: Vec<f64>,
        sum: f64,
        sum_sq: f64,
        sum_ln_f0: f64,
    },
}

/// One sequential test's running state. Single-owner, one per trial.
#[derive(Debug, Clone)]
pub struct TestState {
    w_bits: f64,
    n: u64,
    status: Status,
    thresholds: Thresholds,
    lambda_bits: f64,
    max_samples: u64,
    flagged: bool,
    engine: Engine,
}

/// Distance floor for coincident 1-NN points.
const RHO_FLOOR: f64 = f64::EPSILON;

impl TestState {
    pub fn new(config: &TestConfig) -> Result<Self, SeqError> {
        config.validate()?;
        let engine = match &config.variant {
            Variant::Sprt { p0, p1 } => Engine::Sprt { p0: p0.clone(), p1: p1.clone() },
            Variant::UnivFinite { p0, coder } | Variant::UnivFiniteModified { p0, coder, .. } => {
                let alphabet = p0.alphabet_size().ok_or_else(|| {
                    SeqError::InvalidConfig(format!(
                        "finite-alphabet test needs a finite-alphabet p0, got {}",
                        p0.family_name()
                    ))
                })?;
                let log2_p0 = (0..alphabet).map(|i| p0.log_density(i as f64) * LOG2_E).collect();
                let modified = match &config.variant {
                    Variant::UnivFiniteModified { tolerance, .. } => {
                        let n0 = config.thresholds.lower_bits.abs() / (config.lambda_bits / 2.0);
                        Some((n0, *tolerance))
                    }
                    _ => None,
                };
                Engine::UnivFinite { log2_p0, coder: Coder::new(*coder, alphabet), modified }
            }
            Variant::Lzslrt { f0, quantizer, redundancy_c, redundancy_times_n } => Engine::Continuous {
                f0: f0.clone(),
                quantizer: *quantizer,
                coder: Coder::new(CoderKind::Lz78, quantizer.alphabet),
                lz_correction: Some((*redundancy_c, *redundancy_times_n)),
                sum_log2_f0: 0.0,
            },
            Variant::Ktslrt { f0, quantizer, shift } => Engine::Continuous {
                f0: f0.clone(),
                quantizer: *quantizer,
                coder: Coder::new(CoderKind::KtAe { shift: *shift }, quantizer.alphabet),
                lz_correction: None,
                sum_log2_f0: 0.0,
            },
            Variant::Hoeffding { p0, eta_bits, sample_size } => {
                let alphabet = p0.alphabet_size().ok_or_else(|| {
                    SeqError::InvalidConfig("Hoeffding test needs a finite-alphabet p0".into())
                })?;
                if *sample_size == 0 {
                    return Err(SeqError::InvalidConfig("Hoeffding sample_size must be >= 1".into()));
                }
                Engine::Hoeffding {
                    p0: p0.clone(),
                    eta_bits: *eta_bits,
                    sample_size: *sample_size,
                    counts: vec![0; alphabet],
                    off_support: false,
                }
            }
            Variant::Nn1Entropy { f0 } => Engine::Nn1 {
                f0: f0.clone(),
                points: Vec::new(),
                nn_dist: Vec::new(),
                sum_ln_rho: 0.0,
                sum_ln_f0: 0.0,
            },
            Variant::Kde { f0 } => Engine::Kde {
                f0: f0.clone(),
                points: Vec::new(),
                sum: 0.0,
                sum_sq: 0.0,
                sum_ln_f0: 0.0,
            },
        };
        Ok(TestState {
            w_bits: 0.0,
            n: 0,
            status: Status::Running,
            thresholds: config.thresholds,
            lambda_bits: config.lambda_bits,
            max_samples: config.max_samples,
            flagged: false,
            engine,
        })
    }

    pub fn statistic_bits(&self) -> f64 {
        self.w_bits
    }

    pub fn samples_seen(&self) -> u64 {
        self.n
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_running(&self) -> bool {
        self.status == Status::Running
    }

    /// Whether an infinite likelihood ratio or a clamped degeneracy occurred.
    pub fn flagged(&self) -> bool {
        self.flagged
    }

    /// Feeds one observation. No-op once the state has left `Running`
    /// (stopping-time semantics).
    pub fn step(&mut self, x: f64) -> Result<(), SeqError> {
        if self.status != Status::Running {
            return Ok(());
        }
        if self.n >= self.max_samples {
            self.status = Status::Capped;
            return Ok(());
        }
        self.n += 1;
        match &mut self.engine {
            Engine::Sprt { p0, p1 } => {
                let l1 = p1.log_density(x);
                let l0 = p0.log_density(x);
                if l1 == f64::NEG_INFINITY && l0 == f64::NEG_INFINITY {
                    self.n -= 1;
                    return Err(SeqError::OffBothSupports { x });
                }
                if l0 == f64::NEG_INFINITY {
                    self.w_bits = f64::INFINITY;
                    self.flagged = true;
                } else if l1 == f64::NEG_INFINITY {
                    self.w_bits = f64::NEG_INFINITY;
                    self.flagged = true;
                } else {
                    self.w_bits += (l1 - l0) * LOG2_E;
                }
                self.check_thresholds();
            }
            Engine::UnivFinite { log2_p0, coder, modified } => {
                let sym = as_symbol(x).filter(|s| *s < log2_p0.len());
                match sym {
                    Some(s) if log2_p0[s] > f64::NEG_INFINITY => {
                        let dl = coder.push(s);
                        self.w_bits += -dl - log2_p0[s] - self.lambda_bits / 2.0;
                    }
                    _ => {
                        // P0-impossible observation: the likelihood ratio is
                        // infinite in favor of H1.
                        self.w_bits = f64::INFINITY;
                        self.flagged = true;
                    }
                }
                match *modified {
                    None => self.check_thresholds(),
                    Some((n0, schedule)) => {
                        let eps = schedule.eval(self.n);
                        let n = self.n as f64;
                        if self.w_bits >= self.thresholds.upper_bits {
                            self.status = Status::Decided(Decision::H1);
                        } else if self.w_bits <= self.thresholds.lower_bits {
                            // Veto implausibly early H0 decisions (likely
                            // miss-detections); the boundary itself stands.
                            if n >= n0 - eps {
                                self.status = Status::Decided(Decision::H0);
                            }
                        } else if n > n0 + eps {
                            // The statistic idled past the known null
                            // stopping time.
                            self.status = Status::Decided(Decision::H0);
                        }
                    }
                }
            }
            Engine::Continuous { f0, quantizer, coder, lz_correction, sum_log2_f0 } => {
                let l0 = f0.log_density(x);
                if l0 == f64::NEG_INFINITY {
                    self.w_bits = f64::INFINITY;
                    self.flagged = true;
                } else {
                    *sum_log2_f0 += l0 * LOG2_E;
                    coder.push(quantizer.quantize(x));
                    let n = self.n as f64;
                    let correction = match lz_correction {
                        Some((c, times_n)) => {
                            let eps = lz_redundancy(self.n, *c);
                            if *times_n {
                                n * eps
                            } else {
                                eps
                            }
                        }
                        None => 0.0,
                    };
                    self.w_bits = -coder.codelength()
                        - correction
                        - n * quantizer.delta.log2()
                        - *sum_log2_f0
                        - n * self.lambda_bits / 2.0;
                }
                self.check_thresholds();
            }
            Engine::Hoeffding { p0, eta_bits, sample_size, counts, off_support } => {
                match as_symbol(x).filter(|s| *s < counts.len()) {
                    Some(s) => counts[s] += 1,
                    None => *off_support = true,
                }
                if self.n == *sample_size {
                    let d = if *off_support {
                        f64::INFINITY
                    } else {
                        baselines::type_divergence_bits(counts, p0)
                    };
                    self.w_bits = d;
                    let dec = if d >= *eta_bits { Decision::H1 } else { Decision::H0 };
                    self.status = Status::Decided(dec);
                }
            }
            Engine::Nn1 { f0, points, nn_dist, sum_ln_rho, sum_ln_f0 } => {
                *sum_ln_f0 += f0.log_density(x);
                let mut rho_new = f64::INFINITY;
                let mut clamped = false;
                for (i, xi) in points.iter().enumerate() {
                    let raw = (xi - x).abs();
                    if raw < RHO_FLOOR {
                        clamped = true;
                    }
                    let d = raw.max(RHO_FLOOR);
                    if d < rho_new {
                        rho_new = d;
                    }
                    if d < nn_dist[i] {
                        // The first point carries an infinite placeholder
                        // until its first neighbor arrives.
                        if nn_dist[i].is_finite() {
                            *sum_ln_rho += d.ln() - nn_dist[i].ln();
                        } else {
                            *sum_ln_rho += d.ln();
                        }
                        nn_dist[i] = d;
                    }
                }
                if clamped {
                    self.flagged = true;
                }
                points.push(x);
                nn_dist.push(rho_new);
                if rho_new.is_finite() {
                    *sum_ln_rho += rho_new.ln();
                }
                let n = self.n as f64;
                if self.n >= 2 {
                    let h_nats = *sum_ln_rho / n + (n - 1.0).ln() + baselines::EULER_GAMMA + 1.0;
                    self.w_bits = (-n * h_nats - *sum_ln_f0) * LOG2_E - n * self.lambda_bits / 2.0;
                    self.check_thresholds();
                }
            }
            Engine::Kde { f0, points, sum, sum_sq, sum_ln_f0 } => {
                *sum_ln_f0 += f0.log_density(x);
                points.push(x);
                *sum += x;
                *sum_sq += x * x;
                // The bandwidth rule needs a sample standard deviation, so
                // the statistic only starts at n = 2; coincident samples are
                // clamped rather than producing a zero bandwidth.
                if self.n >= 2 {
                    let n = self.n as f64;
                    let mut sigma = ((*sum_sq - *sum * *sum / n) / (n - 1.0)).max(0.0).sqrt();
                    if sigma < RHO_FLOOR {
                        sigma = RHO_FLOOR;
                        self.flagged = true;
                    }
                    let h = baselines::kde_bandwidth(sigma, self.n);
                    let sum_ln_fhat: f64 = points
                        .iter()
                        .map(|z| baselines::kde_log_density(points, h, *z))
                        .sum();
                    self.w_bits = (sum_ln_fhat - *sum_ln_f0) * LOG2_E - n * self.lambda_bits / 2.0;
                    self.check_thresholds();
                }
            }
        }
        if self.status == Status::Running && self.n >= self.max_samples {
            self.status = Status::Capped;
        }
        Ok(())
    }

    fn check_thresholds(&mut self) {
        if self.w_bits >= self.thresholds.upper_bits {
            self.status = Status::Decided(Decision::H1);
        } else if self.w_bits <= self.thresholds.lower_bits {
            self.status = Status::Decided(Decision::H0);
        }
    }
}

/// Outcome of a completed trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    /// `None` when the sample cap was hit without a decision.
    pub decision: Option<Decision>,
    /// Stopping time (samples consumed).
    pub n: u64,
    /// Set when a P0-impossible observation (infinite likelihood ratio) or a
    /// clamped degenerate geometry influenced the trial.
    pub flagged: bool,
}

impl TrialOutcome {
    pub fn capped(&self) -> bool {
        self.decision.is_none()
    }
}

/// Runs a test to its stopping time on a sample stream.
pub fn run_to_decision(
    state: &mut TestState,
    mut source: impl FnMut() -> f64,
) -> Result<TrialOutcome, SeqError> {
    while state.is_running() {
        state.step(source())?;
    }
    Ok(TrialOutcome {
        decision: match state.status {
            Status::Decided(d) => Some(d),
            _ => None,
        },
        n: state.n,
        flagged: state.flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionModel::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sprt_config(p0: DistributionModel, p1: DistributionModel, gamma: f64) -> TestConfig {
        TestConfig {
            thresholds: Thresholds::symmetric(gamma).unwrap(),
            lambda_bits: 0.0,
            max_samples: 1_000_000,
            variant: Variant::Sprt { p0, p1 },
        }
    }

    #[test]
    fn sprt_zero_drift_never_decides() {
        let p = Bernoulli { p: 0.4 };
        let cfg = TestConfig { max_samples: 200, ..sprt_config(p.clone(), p.clone(), 5.0) };
        let mut state = TestState::new(&cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let out = run_to_decision(&mut state, || p.sample(&mut rng)).unwrap();
        assert!(out.capped());
        assert_eq!(out.n, 200);
    }

    #[test]
    fn sprt_increment_value() {
        let cfg = sprt_config(Bernoulli { p: 0.2 }, Bernoulli { p: 0.5 }, 50.0);
        let mut state = TestState::new(&cfg).unwrap();
        state.step(1.0).unwrap();
        assert!((state.statistic_bits() - (0.5f64 / 0.2).log2()).abs() < 1e-12);
        assert!((state.statistic_bits() - 1.3219).abs() < 1e-4);
    }

    #[test]
    fn sprt_wald_error_bound_monte_carlo() {
        // Data from P1 with 10-bit thresholds: P(decide H0) is far below the
        // 2^-10 Wald level; check the H1 rate >= 0.99 over 1e4 trials.
        let p0 = Bernoulli { p: 0.2 };
        let p1 = Bernoulli { p: 0.5 };
        let cfg = sprt_config(p0, p1.clone(), 10.0);
        let mut h1 = 0u64;
        let trials = 10_000;
        for t in 0..trials {
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + t);
            let mut state = TestState::new(&cfg).unwrap();
            let out = run_to_decision(&mut state, || p1.sample(&mut rng)).unwrap();
            if out.decision == Some(Decision::H1) {
                h1 += 1;
            }
        }
        let rate = h1 as f64 / trials as f64;
        assert!(rate >= 0.99, "H1 rate {rate}");
    }

    #[test]
    fn univ_finite_first_step_value() {
        // KT coder, S=0, P0 = Be(0.5), lambda = 0.5:
        // W1 = -(1+2) - log2(0.5) - 0.25 = -2.25.
        let cfg = TestConfig {
            thresholds: Thresholds::symmetric(50.0).unwrap(),
            lambda_bits: 0.5,
            max_samples: 1000,
            variant: Variant::UnivFinite {
                p0: Bernoulli { p: 0.5 },
                coder: CoderKind::KtAe { shift: 0.0 },
            },
        };
        let mut state = TestState::new(&cfg).unwrap();
        state.step(0.0).unwrap();
        assert!((state.statistic_bits() + 2.25).abs() < 1e-12, "{}", state.statistic_bits());
    }

    #[test]
    fn univ_finite_drift_under_null_is_negative() {
        // With lambda -> 0+ the statistic's drift under H0 is minus the
        // per-symbol redundancy, so W_n/n stays <= 0 on average.
        let p0 = Bernoulli { p: 0.3 };
        let cfg = TestConfig {
            thresholds: Thresholds::symmetric(1e9).unwrap(),
            lambda_bits: 1e-9,
            max_samples: 20_000,
            variant: Variant::UnivFinite { p0: p0.clone(), coder: CoderKind::KtAe { shift: 0.0 } },
        };
        let mut state = TestState::new(&cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            state.step(p0.sample(&mut rng)).unwrap();
        }
        let per_symbol = state.statistic_bits() / 10_000.0;
        assert!(per_symbol <= 0.0, "drift {per_symbol}");
        assert!(per_symbol > -0.01, "redundancy unexpectedly large: {per_symbol}");
    }

    #[test]
    fn univ_finite_off_support_decides_h1_with_flag() {
        let cfg = TestConfig {
            thresholds: Thresholds::symmetric(10.0).unwrap(),
            lambda_bits: 1.0,
            max_samples: 100,
            variant: Variant::UnivFinite {
                p0: Bernoulli { p: 0.5 },
                coder: CoderKind::KtAe { shift: 0.0 },
            },
        };
        let mut state = TestState::new(&cfg).unwrap();
        state.step(7.0).unwrap();
        assert_eq!(state.status(), Status::Decided(Decision::H1));
        assert!(state.flagged);
    }

    #[test]
    fn lzslrt_reduces_to_finite_test_when_terms_cancel() {
        // C=0 and delta=1 on a uniform f0 over [0, |A|): the quantizer is the
        // identity on symbols, log2(delta) = 0, and log2 f0 is the uniform
        // mass, so the statistic equals the finite-alphabet LZ statistic.
        let alphabet = 4usize;
        let quant = QuantizerSpec::from_step(0.0, alphabet as f64, 1.0).unwrap();
        let f0 = FinitePmf { probs: vec![0.25; 4] };
        let cont = TestConfig {
            thresholds: Thresholds::symmetric(1e9).unwrap(),
            lambda_bits: 1.0,
            max_samples: 1000,
            variant: Variant::Lzslrt {
                // A continuous uniform density over [0,4) has density 1/4,
                // numerically equal to the uniform mass used below.
                f0: FinitePmf { probs: vec![0.25; 4] },
                quantizer: quant,
                redundancy_c: 0.0,
                redundancy_times_n: false,
            },
        };
        let fin = TestConfig {
            thresholds: Thresholds::symmetric(1e9).unwrap(),
            lambda_bits: 1.0,
            max_samples: 1000,
            variant: Variant::UnivFinite { p0: f0, coder: CoderKind::Lz78 },
        };
        let mut a = TestState::new(&cont).unwrap();
        let mut b = TestState::new(&fin).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = (rand::Rng::gen_range(&mut rng, 0..4)) as f64;
            a.step(s).unwrap();
            b.step(s).unwrap();
            assert!(
                (a.statistic_bits() - b.statistic_bits()).abs() < 1e-9,
                "diverged: {} vs {}",
                a.statistic_bits(),
                b.statistic_bits()
            );
        }
    }

    #[test]
    fn lzslrt_redundancy_correction_applied() {
        // At n=16 with C=1 the statistic must include the -0.875 correction.
        let quant = QuantizerSpec::from_step(0.0, 2.0, 1.0).unwrap();
        let mk = |c: f64| TestConfig {
            thresholds: Thresholds::symmetric(1e9).unwrap(),
            lambda_bits: 1.0,
            max_samples: 1000,
            variant: Variant::Lzslrt {
                f0: FinitePmf { probs: vec![0.5, 0.5] },
                quantizer: quant,
                redundancy_c: c,
                redundancy_times_n: false,
            },
        };
        let mut with = TestState::new(&mk(1.0)).unwrap();
        let mut without = TestState::new(&mk(0.0)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..16 {
            let s = (rand::Rng::gen_range(&mut rng, 0..2)) as f64;
            with.step(s).unwrap();
            without.step(s).unwrap();
        }
        let gap = without.statistic_bits() - with.statistic_bits();
        assert!((gap - 0.875).abs() < 1e-12, "gap {gap}");
    }

    #[test]
    fn ktslrt_matches_batch_identity_at_s0() {
        // With S=0 the recursion equals
        // -kt_codelength - n log2 delta - sum log2 f0 - n lambda/2 at every n.
        let f0 = Gaussian { mean: 0.0, variance: 1.0 };
        let quant = QuantizerSpec::from_bits(-4.0, 4.0, 4).unwrap();
        let cfg = TestConfig {
            thresholds: Thresholds::symmetric(1e9).unwrap(),
            lambda_bits: 0.7,
            max_samples: 10_000,
            variant: Variant::Ktslrt { f0: f0.clone(), quantizer: quant, shift: 0.0 },
        };
        let mut state = TestState::new(&cfg).unwrap();
        let mut kt = crate::codes::KtCoder::new(quant.alphabet, 0.0);
        let mut sum_log2_f0 = 0.0;
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for i in 1..=300u64 {
            let x = f0.sample(&mut rng);
            state.step(x).unwrap();
            kt.push(quant.quantize(x));
            sum_log2_f0 += f0.log_density(x) * LOG2_E;
            let batch = -kt.codelength()
                - i as f64 * quant.delta.log2()
                - sum_log2_f0
                - i as f64 * 0.7 / 2.0;
            assert!((state.statistic_bits() - batch).abs() < 1e-9);
        }
    }

    #[test]
    fn modified_rules_fire() {
        // Rule 1: a zero-increment statistic decides H0 once n exceeds
        // N0 + eps_n. A constant schedule makes the firing index exact.
        let p0 = Bernoulli { p: 0.5 };
        let gamma = 10.0;
        let lambda = 2.0;
        let cfg = TestConfig {
            thresholds: Thresholds::symmetric(gamma).unwrap(),
            lambda_bits: lambda,
            max_samples: 1000,
            variant: Variant::UnivFiniteModified {
                p0: p0.clone(),
                coder: CoderKind::KtAe { shift: 0.0 },
                tolerance: ToleranceSchedule::Constant(3.0),
            },
        };
        // N0 = 10/1 = 10; rule 1 fires at the first n > 13, i.e. n = 14.
        // Alternating symbols keep the KT statistic close to flat, but rule 1
        // is exercised directly through a synthetic zero-increment engine:
        let mut state = TestState::new(&cfg).unwrap();
        // Zero out the statistic after each step to emulate an idling test.
        let mut fired_at = None;
        for i in 1..=100u64 {
            state.step((i % 2) as f64).unwrap();
            if state.is_running() {
                state.w_bits = 0.0;
            } else {
                fired_at = Some(i);
                break;
            }
        }
        assert_eq!(fired_at, Some(14));
        assert_eq!(state.status(), Status::Decided(Decision::H0));
    }

    #[test]
    fn modified_veto_blocks_early_h0() {
        let cfg = TestConfig {
            thresholds: Thresholds::symmetric(5.0).unwrap(),
            lambda_bits: 1.0,
            max_samples: 1000,
            variant: Variant::UnivFiniteModified {
                p0: Bernoulli { p: 0.5 },
                coder: CoderKind::KtAe { shift: 0.0 },
                tolerance: ToleranceSchedule::Constant(2.0),
            },
        };
        // N0 = 10. A crossing at n < 8 must be vetoed; the boundary n = 8
        // stands.
        let mut state = TestState::new(&cfg).unwrap();
        for i in 1..=7u64 {
            state.step((i % 2) as f64).unwrap();
            state.w_bits = -10.0; // force a lower crossing on the next step
        }
        assert!(state.is_running(), "vetoed region must not stop");
        // n = 8 is the boundary: N0 - eps = 8, crossing stands.
        state.step(0.0).unwrap();
        assert_eq!(state.status(), Status::Decided(Decision::H0));
    }

    #[test]
    fn run_to_decision_deterministic_unit_drift() {
        // A unit-bit-per-step SPRT: P1 puts all mass on symbol 0, P0 splits
        // evenly, so each observation adds exactly +1 bit.
        let cfg = TestConfig {
            thresholds: Thresholds::new(10.0, -1e6).unwrap(),
            lambda_bits: 0.0,
            max_samples: 1_000,
            variant: Variant::Sprt {
                p0: FinitePmf { probs: vec![0.5, 0.5] },
                p1: FinitePmf { probs: vec![1.0] },
            },
        };
        let mut state = TestState::new(&cfg).unwrap();
        let out = run_to_decision(&mut state, || 0.0).unwrap();
        assert_eq!(out.decision, Some(Decision::H1));
        assert_eq!(out.n, 10);
    }

    #[test]
    fn decided_state_is_frozen() {
        let cfg = sprt_config(Bernoulli { p: 0.2 }, Bernoulli { p: 0.5 }, 1.0);
        let mut state = TestState::new(&cfg).unwrap();
        state.step(1.0).unwrap(); // +1.32 bits crosses the 1-bit threshold
        let (w, n, st) = (state.statistic_bits(), state.samples_seen(), state.status());
        assert!(matches!(st, Status::Decided(Decision::H1)));
        for _ in 0..10 {
            state.step(0.0).unwrap();
        }
        assert_eq!(state.statistic_bits(), w);
        assert_eq!(state.samples_seen(), n);
        assert_eq!(state.status(), st);
    }

    #[test]
    fn sprt_off_both_supports_errors() {
        let cfg = sprt_config(Bernoulli { p: 0.2 }, Bernoulli { p: 0.5 }, 5.0);
        let mut state = TestState::new(&cfg).unwrap();
        assert!(matches!(state.step(2.5), Err(SeqError::OffBothSupports { .. })));
        assert!(state.is_running());
    }

    #[test]
    fn proposition_one_universal_tests_terminate() {
        // Universal variants terminate before the cap in >= 99.9% of 1e4
        // trials under both hypotheses at moderate thresholds.
        let p0 = Binomial { trials: 8, p: 0.2 };
        let p1 = Binomial { trials: 8, p: 0.5 };
        let cfg = TestConfig {
            thresholds: Thresholds::symmetric(8.0).unwrap(),
            lambda_bits: 1.2078,
            max_samples: 100_000,
            variant: Variant::UnivFinite { p0: p0.clone(), coder: CoderKind::KtAe { shift: 0.0 } },
        };
        let trials = 10_000u64;
        let mut capped = 0u64;
        for t in 0..trials {
            for (hyp, model) in [(0u64, &p0), (1u64, &p1)] {
                let mut rng = ChaCha12Rng::seed_from_u64(t * 2 + hyp);
                let mut state = TestState::new(&cfg).unwrap();
                let out = run_to_decision(&mut state, || model.sample(&mut rng)).unwrap();
                if out.capped() {
                    capped += 1;
                }
            }
        }
        let rate = 1.0 - capped as f64 / (2 * trials) as f64;
        assert!(rate >= 0.999, "termination rate {rate}");
    }
}
