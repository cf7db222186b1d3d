//! L-node decentralized detection over a coherent multiple-access channel
//! with additive fusion noise.
//!
//! Each slot, every undecided node observes, updates its local statistic and
//! transmits per the crossing indicator
//! `Y_{k,l} = b1 * 1{W >= gamma_1} + b0 * 1{W <= -gamma_0}`; the fusion
//! center receives the coherent sum `Y_k = sum_l Y_{k,l} + Z_k`, accumulates
//! the noise-model log-likelihood ratio
//! `xi_k = log(g_{mu1}(Y_k) / g_{-mu0}(Y_k))` with `mu1 = b1*I`,
//! `mu0 = |b0|*I`, and stops outside `(-beta0, beta1)`.
//!
//! By default a node freezes at its first crossing (it stops sampling and
//! repeats its decision level every subsequent slot); setting
//! `freeze_local = false` keeps the local statistic running and re-evaluates
//! the literal indicator each slot instead.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dist::{DistributionModel, LOG2_E};
use crate::seq::{Decision, Status, TestConfig, TestState, Thresholds};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NetworkError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("fusion LLR undefined: both shifted noise densities vanish at Y = {y}")]
    FusionDegenerate { y: f64 },
    #[error(transparent)]
    Local(#[from] crate::seq::SeqError),
}

/// Which hypothesis generated a simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn label(&self) -> &'static str {
        match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        }
    }
}

/// One local sensor: its true observation laws and its local test.
///
/// The local test's thresholds are `(gamma_1, -gamma_0)`; universal variants
/// only ever see `f0` through their statistic.
#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub sample_h0: DistributionModel,
    pub sample_h1: DistributionModel,
    pub test: TestConfig,
}

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub nodes: Vec<NodeSpec>,
    /// Level transmitted on a local H1 decision (> 0).
    pub b1: f64,
    /// Level transmitted on a local H0 decision (< 0).
    pub b0: f64,
    /// Design count I: how many agreeing nodes the fusion LLR is tuned for.
    pub design_count: u64,
    /// Law of the additive MAC noise `Z_k`.
    pub noise: DistributionModel,
    /// Fusion upper threshold (> 0), crossing decides H1.
    pub beta1_bits: f64,
    /// Fusion lower barrier magnitude (> 0), crossing `-beta0` decides H0.
    pub beta0_bits: f64,
    pub max_slots: u64,
    /// Freeze a node's statistic at its first crossing (default true).
    pub freeze_local: bool,
}

impl NetworkConfig {
    pub fn mu1(&self) -> f64 {
        self.b1 * self.design_count as f64
    }

    pub fn mu0(&self) -> f64 {
        self.b0.abs() * self.design_count as f64
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.nodes.is_empty() {
            return Err(NetworkError::InvalidConfig("need at least one node".into()));
        }
        if self.design_count == 0 {
            return Err(NetworkError::InvalidConfig("design_count I must be >= 1".into()));
        }
        if !(self.mu1() > 0.0 && self.mu0() > 0.0) {
            return Err(NetworkError::InvalidConfig(format!(
                "mu1/mu0 must be positive, got {}/{}",
                self.mu1(),
                self.mu0()
            )));
        }
        if !(self.beta1_bits > 0.0 && self.beta0_bits > 0.0) {
            return Err(NetworkError::InvalidConfig("fusion thresholds must be positive".into()));
        }
        if self.max_slots == 0 {
            return Err(NetworkError::InvalidConfig("max_slots must be >= 1".into()));
        }
        for (l, node) in self.nodes.iter().enumerate() {
            node.test
                .validate()
                .map_err(|e| NetworkError::InvalidConfig(format!("node {l}: {e}")))?;
        }
        Ok(())
    }

    /// Homogeneous network: `l` copies of one node spec.
    pub fn homogeneous(l: usize, node: NodeSpec, b1: f64, b0: f64, design_count: u64,
                       noise: DistributionModel, beta_bits: f64, max_slots: u64) -> Self {
        NetworkConfig {
            nodes: vec![node; l],
            b1,
            b0,
            design_count,
            noise,
            beta1_bits: beta_bits,
            beta0_bits: beta_bits,
            max_slots,
            freeze_local: true,
        }
    }
}

/// Fusion-center log-likelihood ratio in bits:
/// `log2 g_{mu1}(y) - log2 g_{-mu0}(y)` where `g_mu` is the law of `Z + mu`.
pub fn fusion_llr_bits(
    noise: &DistributionModel,
    mu1: f64,
    mu0: f64,
    y: f64,
) -> Result<f64, NetworkError> {
    if let DistributionModel::Gaussian { mean, variance } = noise {
        // Closed form; identical to the generic route but cheaper.
        let a = y - mean + mu0;
        let b = y - mean - mu1;
        return Ok((a * a - b * b) / (2.0 * variance) * LOG2_E);
    }
    if let DistributionModel::FinitePmf { probs } = noise {
        let atoms: Vec<usize> = (0..probs.len()).filter(|i| probs[*i] > 0.0).collect();
        if atoms.len() == 1 {
            // Deterministic (single-atom) noise: the vanishing-variance limit
            // of the Gaussian ratio. Whichever shifted point mass lies closer
            // to Y wins outright; equidistance carries no information.
            let a = atoms[0] as f64;
            let d1 = (y - mu1 - a).abs();
            let d0 = (y + mu0 - a).abs();
            return Ok(if d1 < d0 {
                f64::INFINITY
            } else if d0 < d1 {
                f64::NEG_INFINITY
            } else {
                0.0
            });
        }
    }
    let l1 = noise.log_density(y - mu1);
    let l0 = noise.log_density(y + mu0);
    if l1 == f64::NEG_INFINITY && l0 == f64::NEG_INFINITY {
        return Err(NetworkError::FusionDegenerate { y });
    }
    Ok((l1 - l0) * LOG2_E)
}

/// One decentralized trial's trajectory summary.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkRun {
    /// Fusion decision, `None` when the slot cap was hit.
    pub decision: Option<Decision>,
    /// Fusion stopping slot `N_d` (or the cap).
    pub n_d: u64,
    /// Per-node `(decision, slot)` at first local crossing.
    pub node_decisions: Vec<Option<(Decision, u64)>>,
    /// Slots of the 1st, 2nd, ... local decisions among those that happened
    /// before the fusion stop (`t_j`).
    pub decision_slots: Vec<u64>,
    /// Any node flagged an infinite-likelihood observation.
    pub flagged: bool,
    /// Per-slot `(Y_k, F_k)` when tracing was requested.
    pub trace: Option<Vec<(f64, f64)>>,
}

struct NodeRunner {
    state: TestState,
    gamma_upper: f64,
    gamma_lower: f64,
    latched: Option<(Decision, u64)>,
}

impl NodeRunner {
    fn new(spec: &NodeSpec, freeze: bool, max_slots: u64) -> Result<Self, NetworkError> {
        let mut test = spec.test.clone();
        test.max_samples = test.max_samples.max(max_slots + 1);
        let (gamma_upper, gamma_lower) = (test.thresholds.upper_bits, test.thresholds.lower_bits);
        if !freeze {
            // The literal per-slot indicator needs the statistic to keep
            // evolving; move the stopping boundary out of reach and compare
            // against the node thresholds externally.
            test.thresholds = Thresholds::new(f64::MAX / 4.0, f64::MIN / 4.0)
                .expect("huge thresholds are valid");
        }
        Ok(NodeRunner {
            state: TestState::new(&test)?,
            gamma_upper,
            gamma_lower,
            latched: None,
        })
    }

    /// Transmission level for the current slot, after stepping.
    fn transmit_level(&self, b1: f64, b0: f64, freeze: bool) -> f64 {
        if freeze {
            match self.latched {
                Some((Decision::H1, _)) => b1,
                Some((Decision::H0, _)) => b0,
                None => 0.0,
            }
        } else {
            let w = self.state.statistic_bits();
            if w >= self.gamma_upper {
                b1
            } else if w <= self.gamma_lower {
                b0
            } else {
                0.0
            }
        }
    }
}

/// Runs one full synchronous-slot network trial.
pub fn run_network<R: Rng>(
    config: &NetworkConfig,
    hypothesis: Hypothesis,
    rng: &mut R,
    record_trace: bool,
) -> Result<NetworkRun, NetworkError> {
    config.validate()?;
    let freeze = config.freeze_local;
    let mut nodes = config
        .nodes
        .iter()
        .map(|spec| NodeRunner::new(spec, freeze, config.max_slots))
        .collect::<Result<Vec<_>, _>>()?;
    let (mu1, mu0) = (config.mu1(), config.mu0());
    let mut f_bits = 0.0;
    let mut decision = None;
    let mut n_d = config.max_slots;
    let mut decision_slots = Vec::new();
    let mut trace = record_trace.then(Vec::new);

    'slots: for k in 1..=config.max_slots {
        let mut y = 0.0;
        for (runner, spec) in nodes.iter_mut().zip(&config.nodes) {
            let undecided = runner.latched.is_none();
            if undecided || !freeze {
                let model = match hypothesis {
                    Hypothesis::H0 => &spec.sample_h0,
                    Hypothesis::H1 => &spec.sample_h1,
                };
                let x = model.sample(rng);
                runner.state.step(x)?;
            }
            if runner.latched.is_none() {
                let crossed = if freeze {
                    match runner.state.status() {
                        Status::Decided(d) => Some(d),
                        _ => None,
                    }
                } else {
                    let w = runner.state.statistic_bits();
                    if w >= runner.gamma_upper {
                        Some(Decision::H1)
                    } else if w <= runner.gamma_lower {
                        Some(Decision::H0)
                    } else {
                        None
                    }
                };
                if let Some(d) = crossed {
                    runner.latched = Some((d, k));
                    decision_slots.push(k);
                }
            }
            y += runner.transmit_level(config.b1, config.b0, freeze);
        }
        y += config.noise.sample(rng);
        let xi = fusion_llr_bits(&config.noise, mu1, mu0, y)?;
        f_bits += xi;
        if let Some(t) = trace.as_mut() {
            t.push((y, f_bits));
        }
        if f_bits >= config.beta1_bits {
            decision = Some(Decision::H1);
            n_d = k;
            break 'slots;
        }
        if f_bits <= -config.beta0_bits {
            decision = Some(Decision::H0);
            n_d = k;
            break 'slots;
        }
    }

    let flagged = nodes.iter().any(|r| {
        // A latched infinite-LLR decision surfaces through the state flag.
        r.state.flagged()
    });
    Ok(NetworkRun {
        decision,
        n_d,
        node_decisions: nodes.into_iter().map(|r| r.latched).collect(),
        decision_slots,
        flagged,
        trace,
    })
}
