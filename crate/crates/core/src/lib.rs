//! How fast do two myopic Bayesian agents learn a hidden binary state from
//! private signals and from each other's actions?
//!
//! This crate computes the answer both exactly at finite horizon and
//! asymptotically:
//!
//! - [`model`]: exact probability kernels for the conditional signal walk
//!   (pmfs, tails, path-constrained survival, the ballot identity, sampling);
//! - [`rates`]: closed-form and fixed-point learning rates, information
//!   transmission efficiencies, and the exact error probability of the
//!   last-action observer;
//! - [`thresholds`]: the recursive threshold sequence whose survival event
//!   is exactly "both agents were wrong in every period", with its
//!   dynamic-programming survival probabilities and groupthink diagnostics;
//! - [`oracle`]: brute-force exact-rational Bayesian agents for all four
//!   observation regimes at small horizons, the ground truth everything
//!   else is verified against;
//! - [`sim`]: reproducible Monte Carlo frequency estimates and rate fits.

// negated float comparisons are the NaN-rejecting forms of the guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod oracle;
pub mod rates;
pub mod rational;
pub mod sim;
pub mod thresholds;

pub use error::{Error, Result};
pub use model::{
    all_below_prob, conditional_tail_concentration, sample_path, tail_prob, walk_pmf, Action,
    ModelParams, SignalPath, StateOfNature, TailPredicate, WalkDistribution,
};
pub use oracle::{JointPathTable, Regime};
pub use rates::{default_grid, rate_report, RateReport};
pub use rational::{Rat, RationalParams};
pub use sim::{estimate_rate, simulate, SimConfig, SimRegime, SimResult};
pub use thresholds::{
    compute_thresholds, groupthink_profile, SurvivalTable, ThresholdSequence,
};
