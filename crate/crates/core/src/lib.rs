//! Universal (nonparametric) sequential hypothesis testing via universal
//! source codes.
//!
//! The null distribution is fully known; the alternative is only known to
//! lie in the class `C = {P1 : D(P1||P0) >= lambda}`. Universal codelengths
//! (LZ78, KT estimator + arithmetic-encoder bound) stand in for the unknown
//! log-likelihood, yielding two-sided sequential tests for finite and
//! (via uniform quantization) continuous alphabets, plus classical
//! baselines, an L-node decentralized simulator with a noisy-MAC fusion
//! center, the matching analytical approximations, and a deterministic
//! Monte Carlo harness.

pub mod codes;
pub mod decentralized;
pub mod dist;
pub mod harness;
pub mod quant;
pub mod seq;
pub mod stats;
pub mod theory;
