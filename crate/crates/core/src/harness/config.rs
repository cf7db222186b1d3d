//! Experiment configuration file schema.
//!
//! Plain TOML with one table per mode. Distributions are written as a family
//! name plus a parameter list:
//!
//! ```toml
//! seed = 42
//! trials = 10000
//!
//! [single]
//! variant = "ktslrt"        # sprt | univ_finite | univ_finite_modified |
//!                           # lzslrt | ktslrt | hoeffding | nn1_entropy | kde
//! lambda_bits = 1.0
//! gamma_bits = 20.0         # symmetric thresholds; or upper_bits/lower_bits,
//!                           # or alpha/beta error targets
//! max_samples = 1000000
//! shift = 1.0               # KT S constant (ktslrt, univ_finite kt coder)
//!
//! [single.f0]
//! family = "gaussian"       # gaussian | lognormal | pareto | bernoulli |
//! params = [0.0, 1.0]       # binomial | pmf
//!
//! [single.f1]
//! family = "gaussian"
//! params = [0.0, 5.0]
//!
//! [single.quantizer]
//! bits = 8                  # or delta = 0.3125
//! tail_mass = 1e-4          # or lo = -40.0, hi = 40.0
//! ```
//!
//! `[sweep] gamma_bits = [...]`, `[calibrate] target_error / hypothesis`, and
//! a `[network]` table (nodes, b1/b0, design_count, fusion thresholds, noise,
//! and a `[network.local]` test block reusing the single-test keys) cover the
//! other modes.

use serde::Deserialize;

use crate::codes::CoderKind;
use crate::decentralized::{Hypothesis, NetworkConfig, NodeSpec};
use crate::dist::DistributionModel;
use crate::harness::{ExperimentKind, ExperimentSpec, HarnessError, SingleExperiment};
use crate::quant::{auto_range, QuantizerSpec};
use crate::seq::{TestConfig, Thresholds, ToleranceSchedule, Variant};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,
    pub single: Option<SingleTable>,
    pub sweep: Option<SweepTable>,
    pub calibrate: Option<CalibrateTable>,
    pub network: Option<NetworkTable>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistTable {
    pub family: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantTable {
    pub bits: Option<u32>,
    pub delta: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tail_mass: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleTable {
    pub variant: String,
    pub f0: DistTable,
    pub f1: DistTable,
    pub lambda_bits: Option<f64>,
    pub gamma_bits: Option<f64>,
    pub upper_bits: Option<f64>,
    pub lower_bits: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub max_samples: Option<u64>,
    pub quantizer: Option<QuantTable>,
    pub coder: Option<String>,
    pub shift: Option<f64>,
    pub redundancy_c: Option<f64>,
    pub redundancy_times_n: Option<bool>,
    pub eta_bits: Option<f64>,
    pub sample_size: Option<u64>,
    pub tolerance_scale: Option<f64>,
    pub tolerance_constant: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTable {
    pub gamma_bits: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateTable {
    pub target_error: f64,
    pub hypothesis: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkTable {
    pub nodes: usize,
    pub b1: f64,
    pub b0: f64,
    pub design_count: u64,
    pub beta_bits: Option<f64>,
    pub beta1_bits: Option<f64>,
    pub beta0_bits: Option<f64>,
    pub gamma_bits: f64,
    pub max_slots: Option<u64>,
    pub freeze_local: Option<bool>,
    pub noise: DistTable,
    pub local: SingleTable,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

pub fn parse_distribution(t: &DistTable) -> Result<DistributionModel, HarnessError> {
    let p = &t.params;
    let need = |n: usize| {
        if p.len() != n {
            Err(bad(format!("family '{}' needs {n} params, got {}", t.family, p.len())))
        } else {
            Ok(())
        }
    };
    let model = match t.family.to_ascii_lowercase().as_str() {
        "gaussian" | "normal" => {
            need(2)?;
            DistributionModel::Gaussian { mean: p[0], variance: p[1] }
        }
        "lognormal" => {
            need(2)?;
            DistributionModel::Lognormal { mean: p[0], variance: p[1] }
        }
        "pareto" => {
            need(2)?;
            DistributionModel::Pareto { shape: p[0], scale: p[1] }
        }
        "bernoulli" => {
            need(1)?;
            DistributionModel::Bernoulli { p: p[0] }
        }
        "binomial" => {
            need(2)?;
            if p[0] < 1.0 || p[0].fract() != 0.0 {
                return Err(bad(format!("binomial trial count must be a positive integer, got {}", p[0])));
            }
            DistributionModel::Binomial { trials: p[0] as u64, p: p[1] }
        }
        "pmf" | "finite_pmf" => DistributionModel::FinitePmf { probs: p.clone() },
        other => return Err(bad(format!("unknown distribution family '{other}'"))),
    };
    model.validated().map_err(|e| bad(e.to_string()))
}

fn parse_quantizer(t: &QuantTable, f0: &DistributionModel) -> Result<QuantizerSpec, HarnessError> {
    let (lo, hi) = match (t.lo, t.hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        (None, None) => {
            let tail = t.tail_mass.unwrap_or(1e-4);
            auto_range(f0, tail).map_err(|e| bad(e.to_string()))?
        }
        _ => return Err(bad("quantizer needs both lo and hi (or neither)")),
    };
    match (t.bits, t.delta) {
        (Some(_), Some(_)) => Err(bad("quantizer takes bits or delta, not both")),
        (None, Some(delta)) => QuantizerSpec::from_step(lo, hi, delta).map_err(|e| bad(e.to_string())),
        // Eight-bit default.
        (bits, None) => QuantizerSpec::from_bits(lo, hi, bits.unwrap_or(8)).map_err(|e| bad(e.to_string())),
    }
}

fn parse_coder(name: Option<&str>, shift: Option<f64>) -> Result<CoderKind, HarnessError> {
    match name.unwrap_or("kt").to_ascii_lowercase().as_str() {
        "kt" | "kt_ae" | "ktae" => Ok(CoderKind::KtAe { shift: shift.unwrap_or(0.0) }),
        "lz78" | "lz" => Ok(CoderKind::Lz78),
        other => Err(bad(format!("unknown coder '{other}'"))),
    }
}

fn parse_thresholds(t: &SingleTable) -> Result<Thresholds, HarnessError> {
    let thr = match (t.gamma_bits, t.upper_bits, t.lower_bits, t.alpha, t.beta) {
        (Some(g), None, None, None, None) => Thresholds::symmetric(g),
        (None, Some(u), Some(l), None, None) => Thresholds::new(u, l),
        (None, None, None, Some(a), Some(b)) => Thresholds::from_error_probs(a, b),
        _ => {
            return Err(bad(
                "thresholds: give exactly one of gamma_bits, upper_bits+lower_bits, or alpha+beta",
            ))
        }
    };
    thr.map_err(|e| bad(e.to_string()))
}

/// Builds the test config plus the true sampling pair from a `[single]` (or
/// `[network.local]`) table.
pub fn parse_single(t: &SingleTable) -> Result<SingleExperiment, HarnessError> {
    let f0 = parse_distribution(&t.f0)?;
    let f1 = parse_distribution(&t.f1)?;
    let thresholds = parse_thresholds(t)?;
    let lambda_bits = t.lambda_bits.unwrap_or(0.0);
    let max_samples = t.max_samples.unwrap_or(1_000_000);
    let quantizer = |f0: &DistributionModel| -> Result<QuantizerSpec, HarnessError> {
        let table = t.quantizer.clone().unwrap_or(QuantTable {
            bits: None,
            delta: None,
            lo: None,
            hi: None,
            tail_mass: None,
        });
        parse_quantizer(&table, f0)
    };
    let variant = match t.variant.to_ascii_lowercase().as_str() {
        "sprt" => Variant::Sprt { p0: f0.clone(), p1: f1.clone() },
        "univ_finite" => Variant::UnivFinite {
            p0: f0.clone(),
            coder: parse_coder(t.coder.as_deref(), t.shift)?,
        },
        "univ_finite_modified" => {
            let coder = parse_coder(t.coder.as_deref(), t.shift)?;
            let alphabet = f0
                .alphabet_size()
                .ok_or_else(|| bad("univ_finite_modified needs a finite-alphabet f0"))?;
            let scale = t.tolerance_scale.unwrap_or(1.0);
            let tolerance = match (t.tolerance_constant, coder) {
                (Some(c), _) => ToleranceSchedule::Constant(c),
                (None, CoderKind::KtAe { .. }) => ToleranceSchedule::KtEnvelope { alphabet, scale },
                (None, CoderKind::Lz78) => ToleranceSchedule::LzEnvelope {
                    c: t.redundancy_c.unwrap_or((alphabet as f64).log2()),
                    scale,
                },
            };
            Variant::UnivFiniteModified { p0: f0.clone(), coder, tolerance }
        }
        "lzslrt" => {
            let q = quantizer(&f0)?;
            Variant::Lzslrt {
                f0: f0.clone(),
                quantizer: q,
                redundancy_c: t.redundancy_c.unwrap_or((q.alphabet as f64).log2()),
                redundancy_times_n: t.redundancy_times_n.unwrap_or(false),
            }
        }
        "ktslrt" => Variant::Ktslrt {
            f0: f0.clone(),
            quantizer: quantizer(&f0)?,
            shift: t.shift.unwrap_or(1.0),
        },
        "hoeffding" => Variant::Hoeffding {
            p0: f0.clone(),
            eta_bits: t.eta_bits.ok_or_else(|| bad("hoeffding needs eta_bits"))?,
            sample_size: t.sample_size.ok_or_else(|| bad("hoeffding needs sample_size"))?,
        },
        "nn1_entropy" | "nn1" => Variant::Nn1Entropy { f0: f0.clone() },
        "kde" => Variant::Kde { f0: f0.clone() },
        other => return Err(bad(format!("unknown variant '{other}'"))),
    };
    let test = TestConfig { thresholds, lambda_bits, max_samples, variant };
    test.validate().map_err(|e| bad(e.to_string()))?;
    Ok(SingleExperiment { test, sample_h0: f0, sample_h1: f1 })
}

pub fn parse_network(t: &NetworkTable) -> Result<NetworkConfig, HarnessError> {
    let mut local_table = t.local.clone();
    if local_table.gamma_bits.is_none() && local_table.upper_bits.is_none() && local_table.alpha.is_none() {
        local_table.gamma_bits = Some(t.gamma_bits);
    }
    let local = parse_single(&local_table)?;
    let node = NodeSpec {
        sample_h0: local.sample_h0,
        sample_h1: local.sample_h1,
        test: local.test,
    };
    let (beta1, beta0) = match (t.beta_bits, t.beta1_bits, t.beta0_bits) {
        (Some(b), None, None) => (b, b),
        (None, Some(b1), Some(b0)) => (b1, b0),
        _ => return Err(bad("network: give beta_bits or beta1_bits+beta0_bits")),
    };
    let config = NetworkConfig {
        nodes: vec![node; t.nodes],
        b1: t.b1,
        b0: t.b0,
        design_count: t.design_count,
        noise: parse_distribution(&t.noise)?,
        beta1_bits: beta1,
        beta0_bits: beta0,
        max_slots: t.max_slots.unwrap_or(1_000_000),
        freeze_local: t.freeze_local.unwrap_or(true),
    };
    config.validate().map_err(|e| bad(e.to_string()))?;
    Ok(config)
}

/// Everything a CLI invocation needs, parsed from one file.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub seed: u64,
    pub trials: u64,
    pub workers: usize,
    pub out: Option<String>,
    pub single: Option<SingleExperiment>,
    pub sweep_grid: Option<Vec<f64>>,
    pub calibrate: Option<(f64, Hypothesis)>,
    pub network: Option<NetworkConfig>,
}

impl ParsedConfig {
    pub fn experiment(&self, kind: ExperimentKind) -> ExperimentSpec {
        ExperimentSpec { kind, trials: self.trials, seed: self.seed, workers: self.workers }
    }
}

/// Parses the TOML text, with field-level diagnostics on failure.
pub fn parse_config(text: &str) -> Result<ParsedConfig, HarnessError> {
    let file: FileConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
    let single = file.single.as_ref().map(parse_single).transpose()?;
    let network = file.network.as_ref().map(parse_network).transpose()?;
    let calibrate = file
        .calibrate
        .as_ref()
        .map(|c| -> Result<(f64, Hypothesis), HarnessError> {
            let hyp = match c.hypothesis.to_ascii_lowercase().as_str() {
                "h0" => Hypothesis::H0,
                "h1" => Hypothesis::H1,
                other => return Err(bad(format!("calibrate.hypothesis must be h0 or h1, got '{other}'"))),
            };
            Ok((c.target_error, hyp))
        })
        .transpose()?;
    Ok(ParsedConfig {
        seed: file.seed.unwrap_or(0),
        trials: file.trials.unwrap_or(10_000).max(1),
        workers: file.workers.unwrap_or(0),
        out: file.out,
        single,
        sweep_grid: file.sweep.map(|s| s.gamma_bits),
        calibrate,
        network,
    })
}
