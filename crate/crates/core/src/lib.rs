//! Model-based episodic reinforcement learning over continuous state-action
//! spaces with adaptive dyadic discretization.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`geometry`]: dyadic cubes and the per-step partition tree over
//!   `[0,1]^{d_S} x [0,1]^{d_A}` under the infinity norm.
//! - [`estimators`]: per-ball statistics, ancestor-aggregated reward and
//!   transition estimates, splitting thresholds and confidence bonuses.
//! - [`agents`]: the adaptive model-based agent plus three baselines behind
//!   the [`agents::Agent`] contract.
//! - [`envs`]: the oil-discovery and ambulance-routing benchmarks.
//! - [`oracle`]: a grid dynamic-programming optimal value oracle and regret
//!   accounting.
//!
//! File formats, experiment orchestration and the CLI live in the companion
//! `adamb-lab` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agents;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod oracle;

pub use error::{Error, Result};
