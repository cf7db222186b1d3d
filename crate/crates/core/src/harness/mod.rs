//! Monte Carlo experiment driver: deterministic per-trial RNG streams,
//! parallel trial execution, estimator aggregation, threshold calibration,
//! sweeps and CSV emission.
//!
//! Determinism contract: a spec's `seed` fully determines every result.
//! Each trial draws from a counter-derived stream keyed by
//! `(seed, hypothesis, trial_id)`, so the worker count can never change the
//! numbers — only the wall-clock time.

pub mod config;
pub mod csv;
mod rng;

pub use rng::trial_rng;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::decentralized::{run_network, Hypothesis, NetworkConfig, NetworkError, NetworkRun};
use crate::dist::DistributionModel;
use crate::seq::{run_to_decision, Decision, SeqError, TestConfig, TestState, Thresholds, TrialOutcome};
use crate::stats::{wilson_interval, Accumulator, WilsonInterval};

#[derive(Debug, Clone, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// A single-node experiment: the test under examination plus the true
/// sampling models for each hypothesis.
#[derive(Debug, Clone)]
pub struct SingleExperiment {
    pub test: TestConfig,
    pub sample_h0: DistributionModel,
    pub sample_h1: DistributionModel,
}

#[derive(Debug, Clone)]
pub enum ExperimentKind {
    Single(SingleExperiment),
    Network(NetworkConfig),
}

/// Fully specified experiment; `seed` determines all results.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Trials per hypothesis.
    pub trials: u64,
    pub seed: u64,
    /// Rayon worker threads; 0 picks the default.
    pub workers: usize,
}

/// One simulated trial, in CSV row order.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub hypothesis: Hypothesis,
    pub variant: &'static str,
    pub decision: Option<Decision>,
    pub n: u64,
    pub capped: bool,
}

/// Aggregated Monte Carlo estimates.
#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub trials_per_hypothesis: u64,
    pub p_fa: WilsonInterval,
    pub p_md: WilsonInterval,
    pub e0_n: f64,
    pub e0_se: f64,
    pub e1_n: f64,
    pub e1_se: f64,
    /// `0.5 E_1[N] + 0.5 E_0[N]`.
    pub e_dd: f64,
    /// `0.5 P_FA + 0.5 P_MD`.
    pub p_e: f64,
    pub capped: u64,
    pub flagged: u64,
}

impl McSummary {
    /// Cap-dominated runs (> 1%) are statistically unreliable.
    pub fn unreliable(&self) -> bool {
        self.capped as f64 > 0.02 * self.trials_per_hypothesis as f64
    }
}

fn aggregate(records: &[TrialRecord]) -> McSummary {
    let mut fa = 0u64;
    let mut md = 0u64;
    let mut decided_h0 = 0u64;
    let mut decided_h1 = 0u64;
    let mut capped = 0u64;
    let mut n0 = Accumulator::default();
    let mut n1 = Accumulator::default();
    let mut per_hyp = 0u64;
    for r in records {
        if r.hypothesis == Hypothesis::H0 {
            per_hyp += 1;
        }
        match (r.hypothesis, r.decision) {
            (_, None) => capped += 1,
            (Hypothesis::H0, Some(d)) => {
                decided_h0 += 1;
                n0.push(r.n as f64);
                if d == Decision::H1 {
                    fa += 1;
                }
            }
            (Hypothesis::H1, Some(d)) => {
                decided_h1 += 1;
                n1.push(r.n as f64);
                if d == Decision::H0 {
                    md += 1;
                }
            }
        }
    }
    let p_fa = wilson_interval(fa, decided_h0);
    let p_md = wilson_interval(md, decided_h1);
    McSummary {
        trials_per_hypothesis: per_hyp,
        p_fa,
        p_md,
        e0_n: n0.mean(),
        e0_se: n0.std_error(),
        e1_n: n1.mean(),
        e1_se: n1.std_error(),
        e_dd: 0.5 * n0.mean() + 0.5 * n1.mean(),
        p_e: 0.5 * p_fa.point + 0.5 * p_md.point,
        capped,
        flagged: 0,
    }
}

fn run_single_trial(
    exp: &SingleExperiment,
    hypothesis: Hypothesis,
    seed: u64,
    trial: u64,
) -> Result<TrialOutcome, SeqError> {
    let mut rng = trial_rng(seed, hypothesis, trial);
    let model = match hypothesis {
        Hypothesis::H0 => &exp.sample_h0,
        Hypothesis::H1 => &exp.sample_h1,
    };
    let mut state = TestState::new(&exp.test)?;
    run_to_decision(&mut state, || model.sample(&mut rng))
}

/// Runs `spec.trials` trials under each hypothesis; deterministic for a
/// fixed seed regardless of `workers`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(McSummary, Vec<TrialRecord>), HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let records: Result<Vec<TrialRecord>, HarnessError> = pool.install(|| {
        (0..2 * spec.trials)
            .into_par_iter()
            .map(|i| {
                let (hypothesis, trial) = if i % 2 == 0 {
                    (Hypothesis::H0, i / 2)
                } else {
                    (Hypothesis::H1, i / 2)
                };
                match &spec.kind {
                    ExperimentKind::Single(exp) => {
                        let out = run_single_trial(exp, hypothesis, spec.seed, trial)?;
                        Ok(TrialRecord {
                            trial_id: trial,
                            hypothesis,
                            variant: exp.test.variant.name(),
                            decision: out.decision,
                            n: out.n,
                            capped: out.capped(),
                        })
                    }
                    ExperimentKind::Network(net) => {
                        let mut rng = trial_rng(spec.seed, hypothesis, trial);
                        let run = run_network(net, hypothesis, &mut rng, false)?;
                        Ok(TrialRecord {
                            trial_id: trial,
                            hypothesis,
                            variant: "network",
                            decision: run.decision,
                            n: run.n_d,
                            capped: run.decision.is_none(),
                        })
                    }
                }
            })
            .collect()
    });
    let records = records?;
    Ok((aggregate(&records), records))
}

/// Runs network trials retaining the full per-run structure (decision slots
/// and per-node decisions) for the network CSV and the theory comparisons.
pub fn run_network_trials(
    net: &NetworkConfig,
    hypothesis: Hypothesis,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<NetworkRun>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let runs: Result<Vec<NetworkRun>, NetworkError> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = trial_rng(seed, hypothesis, trial);
                run_network(net, hypothesis, &mut rng, false)
            })
            .collect()
    });
    Ok(runs?)
}

/// Result of a threshold calibration.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    /// Symmetric threshold magnitude (bits) achieving the target.
    pub threshold_bits: f64,
    pub achieved: WilsonInterval,
    pub trials_used: u64,
    pub iterations: u32,
}

/// Error probability of interest under one hypothesis, by Monte Carlo, with
/// the test's symmetric threshold overridden to `gamma`.
fn error_rate_at(
    exp: &SingleExperiment,
    hypothesis: Hypothesis,
    gamma: f64,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<WilsonInterval, HarnessError> {
    let mut test = exp.test.clone();
    test.thresholds = Thresholds::symmetric(gamma)?;
    let spec = SingleExperiment { test, ..exp.clone() };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let outcomes: Result<Vec<TrialOutcome>, SeqError> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|trial| run_single_trial(&spec, hypothesis, seed, trial))
            .collect()
    });
    let wrong = match hypothesis {
        Hypothesis::H0 => Decision::H1,
        Hypothesis::H1 => Decision::H0,
    };
    let mut errors = 0u64;
    let mut decided = 0u64;
    for out in outcomes? {
        if let Some(d) = out.decision {
            decided += 1;
            if d == wrong {
                errors += 1;
            }
        }
    }
    Ok(wilson_interval(errors, decided))
}

/// Calibrates a symmetric threshold to reach `target_error` under
/// `hypothesis` by bisection with adaptively growing Monte Carlo batches.
///
/// Stops once the target lies inside the Wilson interval at the midpoint
/// (with at least enough trials to resolve the target), or fails after
/// `max_iters`.
pub fn calibrate_threshold(
    exp: &SingleExperiment,
    hypothesis: Hypothesis,
    target_error: f64,
    seed: u64,
    workers: usize,
) -> Result<Calibration, HarnessError> {
    if !(target_error > 0.0 && target_error < 0.5) {
        return Err(HarnessError::Calibration(format!(
            "target error must be in (0, 0.5), got {target_error}"
        )));
    }
    // Enough trials that the Wilson interval around the target is meaningful:
    // expect >= ~40 errors at the target rate.
    let full_trials = ((40.0 / target_error) as u64).clamp(2_000, 40_000_000);
    let mut lo = 0.5f64;
    let mut hi = (-target_error.log2()).max(4.0) * 2.0 + 8.0;
    let mut iterations = 0u32;
    let max_iters = 60u32;

    // Make sure the bracket actually straddles the target. Tests whose error
    // has a floor (the modified rules can induce one) never bracket; cap the
    // expansion instead of chasing an unreachable target.
    const MAX_GAMMA_BITS: f64 = 400.0;
    let mut err_hi = error_rate_at(exp, hypothesis, hi, full_trials / 4, seed, workers)?;
    while err_hi.point > target_error && iterations < max_iters && hi < MAX_GAMMA_BITS {
        hi *= 1.6;
        err_hi = error_rate_at(exp, hypothesis, hi, full_trials / 4, seed, workers)?;
        iterations += 1;
    }
    if err_hi.point > target_error {
        return Err(HarnessError::Calibration(format!(
            "could not bracket target {target_error}: error {} at threshold {hi} (floor?)",
            err_hi.point
        )));
    }

    while iterations < max_iters {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        // Batch sizes grow as the bracket tightens.
        let frac = ((hi - lo) / hi).clamp(0.0, 1.0);
        let trials = ((full_trials as f64) * (1.0 - frac).max(0.12)) as u64;
        let iv = error_rate_at(exp, hypothesis, mid, trials, seed, workers)?;
        let cal = Calibration { threshold_bits: mid, achieved: iv, trials_used: trials, iterations };
        if trials >= full_trials / 2 && iv.contains(target_error) {
            return Ok(cal);
        }
        if iv.point > target_error {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / hi < 1e-3 {
            // Bracket exhausted; accept the closest midpoint.
            return Ok(cal);
        }
    }
    Err(HarnessError::Calibration(format!(
        "no convergence after {iterations} iterations (target {target_error})"
    )))
}

/// One sweep row: a threshold and its aggregated estimates.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub gamma_bits: f64,
    pub summary: McSummary,
}

/// Runs the experiment across a symmetric-threshold grid; rows come back
/// sorted by `P_E` (descending threshold order breaks ties). Per-point
/// failures are recorded and skipped.
pub fn sweep(
    spec: &ExperimentSpec,
    gamma_grid: &[f64],
) -> Result<(Vec<SweepRow>, Vec<(f64, String)>), HarnessError> {
    let ExperimentKind::Single(exp) = &spec.kind else {
        return Err(HarnessError::Config("sweep requires a single-node experiment".into()));
    };
    if gamma_grid.is_empty() {
        return Err(HarnessError::Config("sweep grid must be nonempty".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &gamma in gamma_grid {
        let mut test = exp.test.clone();
        let attempt = Thresholds::symmetric(gamma)
            .map_err(HarnessError::from)
            .and_then(|t| {
                test.thresholds = t;
                let point = ExperimentSpec {
                    kind: ExperimentKind::Single(SingleExperiment { test: test.clone(), ..exp.clone() }),
                    ..spec.clone()
                };
                run_experiment(&point)
            });
        match attempt {
            Ok((summary, _)) => rows.push(SweepRow { gamma_bits: gamma, summary }),
            Err(e) => failures.push((gamma, e.to_string())),
        }
    }
    rows.sort_by(|a, b| {
        a.summary
            .p_e
            .partial_cmp(&b.summary.p_e)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok((rows, failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionModel::*;
    use crate::seq::Variant;

    fn bernoulli_experiment(gamma: f64) -> SingleExperiment {
        SingleExperiment {
            test: TestConfig {
                thresholds: Thresholds::symmetric(gamma).unwrap(),
                lambda_bits: 0.0,
                max_samples: 100_000,
                variant: Variant::Sprt { p0: Bernoulli { p: 0.2 }, p1: Bernoulli { p: 0.5 } },
            },
            sample_h0: Bernoulli { p: 0.2 },
            sample_h1: Bernoulli { p: 0.5 },
        }
    }

    #[test]
    fn determinism_across_worker_counts() {
        let spec = |workers| ExperimentSpec {
            kind: ExperimentKind::Single(bernoulli_experiment(8.0)),
            trials: 400,
            seed: 42,
            workers,
        };
        let (s1, r1) = run_experiment(&spec(1)).unwrap();
        let (s4, r4) = run_experiment(&spec(4)).unwrap();
        assert_eq!(r1.len(), r4.len());
        for (a, b) in r1.iter().zip(&r4) {
            assert_eq!(a.trial_id, b.trial_id);
            assert_eq!(a.hypothesis, b.hypothesis);
            assert_eq!(a.decision, b.decision);
            assert_eq!(a.n, b.n);
        }
        assert_eq!(s1.p_fa.point, s4.p_fa.point);
        assert_eq!(s1.e_dd, s4.e_dd);
    }

    #[test]
    fn zero_drift_experiment_is_fully_capped() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::Single(SingleExperiment {
                test: TestConfig {
                    thresholds: Thresholds::symmetric(5.0).unwrap(),
                    lambda_bits: 0.0,
                    max_samples: 100,
                    variant: Variant::Sprt { p0: Bernoulli { p: 0.3 }, p1: Bernoulli { p: 0.3 } },
                },
                sample_h0: Bernoulli { p: 0.3 },
                sample_h1: Bernoulli { p: 0.3 },
            }),
            trials: 50,
            seed: 7,
            workers: 1,
        };
        let (summary, _) = run_experiment(&spec).unwrap();
        assert_eq!(summary.capped, 100);
        assert!(summary.unreliable());
    }

    #[test]
    fn standard_errors_shrink_with_trials() {
        let mk = |trials| ExperimentSpec {
            kind: ExperimentKind::Single(bernoulli_experiment(6.0)),
            trials,
            seed: 11,
            workers: 1,
        };
        let (small, _) = run_experiment(&mk(500)).unwrap();
        let (large, _) = run_experiment(&mk(2000)).unwrap();
        let ratio = small.e1_se / large.e1_se;
        assert!((ratio - 2.0).abs() < 0.6, "SE ratio {ratio}");
    }

    #[test]
    fn calibration_hits_target_within_interval() {
        let exp = bernoulli_experiment(6.0);
        let cal = calibrate_threshold(&exp, Hypothesis::H0, 1e-2, 3, 1).unwrap();
        assert!(cal.achieved.contains(1e-2), "achieved {:?}", cal.achieved);
        assert!(cal.threshold_bits > 1.0 && cal.threshold_bits < 20.0);
    }

    #[test]
    fn coupled_seed_error_is_monotone_in_threshold() {
        let exp = bernoulli_experiment(6.0);
        let mut prev = f64::INFINITY;
        for gamma in [3.0, 6.0, 9.0] {
            let iv = error_rate_at(&exp, Hypothesis::H0, gamma, 20_000, 5, 1).unwrap();
            assert!(iv.point <= prev + 1e-12, "error not monotone at gamma {gamma}");
            prev = iv.point;
        }
    }

    #[test]
    fn sweep_sorted_and_monotone() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::Single(bernoulli_experiment(6.0)),
            trials: 3000,
            seed: 13,
            workers: 0,
        };
        let (rows, failures) = sweep(&spec, &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert!(failures.is_empty());
        assert_eq!(rows.len(), 4);
        for w in rows.windows(2) {
            assert!(w[0].summary.p_e <= w[1].summary.p_e + 1e-12);
            // Smaller error costs more samples.
            assert!(w[0].summary.e_dd >= w[1].summary.e_dd - 0.5);
        }
    }
}
