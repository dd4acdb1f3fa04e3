//! Benchmark environments behind the [`Environment`] contract.
//!
//! Steps are numbered `1..=H`. Randomness is always drawn from the generator
//! passed in by the caller, so a fixed seed and action sequence reproduce a
//! trajectory exactly.

mod ambulance;
mod oil;

use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;

pub use ambulance::{Ambulance, AmbulanceConfig, Arrival};
pub use oil::{Oil, OilConfig, Survey};

use crate::error::{Error, Result};
pub use crate::estimators::Lipschitz;

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Episodic MDP on `[0,1]^{d_S} x [0,1]^{d_A}` with rewards in `[0,1]`.
pub trait Environment: Send + Sync {
    fn name(&self) -> String;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn lipschitz(&self) -> Lipschitz;
    /// True when rewards and transitions involve no randomness.
    fn is_deterministic(&self) -> bool;
    /// Start state of a new episode.
    fn reset(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    /// Plays action `a` from state `x` at step `h`.
    fn step(&self, h: usize, x: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Result<Transition>;
    /// `Some(c)` when the next-state law of `(x, a)` does not depend on `x`
    /// and the reward equals the reward of `(a, a)` minus `c`, for the same
    /// random draw. Lets the oracle share work across states.
    fn relocation_cost(&self, _x: &[f64], _a: &[f64]) -> Option<f64> {
        None
    }
}

pub(crate) fn check_step(h: usize, horizon: usize) -> Result<()> {
    if h == 0 || h > horizon {
        return Err(Error::Domain(alloc::format!(
            "step {h} outside 1..={horizon}"
        )));
    }
    Ok(())
}

pub(crate) fn clip_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Default value-function Lipschitz constant, `H * max(L_r, 1)`.
pub fn default_value_lipschitz(horizon: usize, reward_lipschitz: f64) -> f64 {
    horizon as f64 * reward_lipschitz.max(1.0)
}
