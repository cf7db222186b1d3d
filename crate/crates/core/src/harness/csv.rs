//! Versioned CSV emission. A header comment records the column version, the
//! seed and a hash of the experiment configuration so outputs are
//! self-describing.

use std::io::Write;

use sha2::{Digest, Sha256};

use crate::decentralized::NetworkRun;
use crate::harness::{HarnessError, McSummary, SweepRow, TrialRecord};
use crate::seq::Decision;

pub const COLUMNS_VERSION: u32 = 1;

/// Short hex digest of the canonical config text.
pub fn config_hash(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn preamble<W: Write>(w: &mut W, seed: u64, config_text: &str) -> std::io::Result<()> {
    writeln!(w, "# udetect csv v{COLUMNS_VERSION}")?;
    writeln!(w, "# seed={seed} config_sha256={}", config_hash(config_text))
}

fn decision_label(d: Option<Decision>) -> &'static str {
    match d {
        Some(Decision::H0) => "H0",
        Some(Decision::H1) => "H1",
        None => "none",
    }
}

/// Per-trial rows for a single-node experiment.
pub fn write_trials<W: Write>(
    w: &mut W,
    seed: u64,
    config_text: &str,
    records: &[TrialRecord],
) -> Result<(), HarnessError> {
    preamble(w, seed, config_text)?;
    writeln!(w, "trial_id,hypothesis,variant,decision,n,capped")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.trial_id,
            r.hypothesis.label(),
            r.variant,
            decision_label(r.decision),
            r.n,
            r.capped
        )?;
    }
    Ok(())
}

/// Per-run rows for a decentralized experiment. `t_j` columns list the slots
/// of the j-th local decision; node columns record `decision@slot`.
pub fn write_network_runs<W: Write>(
    w: &mut W,
    seed: u64,
    config_text: &str,
    hypothesis: &str,
    runs: &[NetworkRun],
) -> Result<(), HarnessError> {
    preamble(w, seed, config_text)?;
    let l = runs.first().map_or(0, |r| r.node_decisions.len());
    let t_cols: Vec<String> = (1..=l).map(|j| format!("t_{j}")).collect();
    let node_cols: Vec<String> = (1..=l).map(|j| format!("node_{j}")).collect();
    writeln!(w, "run_id,hypothesis,decision,n_d,{},{}", t_cols.join(","), node_cols.join(","))?;
    for (run_id, run) in runs.iter().enumerate() {
        let mut t_vals: Vec<String> = run.decision_slots.iter().map(|t| t.to_string()).collect();
        t_vals.resize(l, String::new());
        let nodes: Vec<String> = run
            .node_decisions
            .iter()
            .map(|nd| match nd {
                Some((d, slot)) => format!("{}@{slot}", decision_label(Some(*d))),
                None => String::new(),
            })
            .collect();
        writeln!(
            w,
            "{run_id},{hypothesis},{},{},{},{}",
            decision_label(run.decision),
            run.n_d,
            t_vals.join(","),
            nodes.join(",")
        )?;
    }
    Ok(())
}

/// Sweep curve rows, already sorted by `P_E`.
pub fn write_sweep<W: Write>(
    w: &mut W,
    seed: u64,
    config_text: &str,
    rows: &[SweepRow],
) -> Result<(), HarnessError> {
    preamble(w, seed, config_text)?;
    writeln!(
        w,
        "gamma_bits,p_e,e_dd,p_fa,p_fa_lo,p_fa_hi,p_md,p_md_lo,p_md_hi,e0_n,e0_se,e1_n,e1_se,capped"
    )?;
    for row in rows {
        let s = &row.summary;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.gamma_bits,
            s.p_e,
            s.e_dd,
            s.p_fa.point,
            s.p_fa.lower,
            s.p_fa.upper,
            s.p_md.point,
            s.p_md.lower,
            s.p_md.upper,
            s.e0_n,
            s.e0_se,
            s.e1_n,
            s.e1_se,
            s.capped
        )?;
    }
    Ok(())
}

/// One-block human summary (also machine-greppable).
pub fn write_summary<W: Write>(w: &mut W, label: &str, s: &McSummary) -> Result<(), HarnessError> {
    writeln!(w, "[{label}] trials/hyp={}", s.trials_per_hypothesis)?;
    writeln!(
        w,
        "[{label}] P_FA={:.6e} [{:.3e}, {:.3e}]  P_MD={:.6e} [{:.3e}, {:.3e}]  P_E={:.6e}",
        s.p_fa.point, s.p_fa.lower, s.p_fa.upper, s.p_md.point, s.p_md.lower, s.p_md.upper, s.p_e
    )?;
    writeln!(
        w,
        "[{label}] E0[N]={:.3} (se {:.3})  E1[N]={:.3} (se {:.3})  E_DD={:.3}  capped={}{}",
        s.e0_n,
        s.e0_se,
        s.e1_n,
        s.e1_se,
        s.e_dd,
        s.capped,
        if s.unreliable() { "  (UNRELIABLE: cap-dominated)" } else { "" }
    )?;
    Ok(())
}
