//! Multi-goal reinforcement learning with entropy-regularized, density-driven
//! replay prioritization.
//!
//! The crate bundles everything needed to run the experiments end to end:
//! small MLPs with hand-written backprop ([`nn`]), point-mass reaching tasks
//! ([`envs`]), episodic replay with hindsight relabeling and several
//! prioritization schemes ([`replay`]), mixture-of-Gaussians trajectory
//! densities and entropy tools ([`density`]), a goal-conditioned DDPG agent
//! ([`agent`]) and the training loop with its diagnostics ([`trainer`]).

// `!(x >= 0.0)` is how validation rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod density;
pub mod envs;
pub mod error;
pub mod nn;
pub mod plot;
pub mod replay;
pub mod stats;
pub mod trainer;

pub use error::{MepError, Result};
