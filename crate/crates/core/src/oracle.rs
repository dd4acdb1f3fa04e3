//! Grid dynamic-programming optimal value oracle and regret accounting.
//!
//! `V*_h` is tabulated at the centers of a uniform grid of `[0,1]^{d_S}` with
//! `resolution` cells per axis. Off-grid states read the value of the cell
//! containing them, which is the nearest grid point in the infinity norm.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::geometry::{check_unit_point, DyadicCube};

/// Oracle construction settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Grid cells per state axis, a power of two `>= 4`.
    pub resolution: usize,
    /// Grid cells per action axis, a power of two.
    pub action_resolution: usize,
    /// Samples per expectation for stochastic environments.
    pub mc_draws: usize,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(resolution: usize, mc_draws: usize, seed: u64) -> Self {
        Self {
            resolution,
            action_resolution: resolution,
            mc_draws,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.resolution < 4 || !self.resolution.is_power_of_two() {
            return Err(Error::Config(alloc::format!(
                "oracle resolution must be a power of two >= 4, got {}",
                self.resolution
            )));
        }
        if !self.action_resolution.is_power_of_two() {
            return Err(Error::Config(alloc::format!(
                "oracle action resolution must be a power of two, got {}",
                self.action_resolution
            )));
        }
        if self.mc_draws == 0 {
            return Err(Error::Config("oracle needs at least one draw".into()));
        }
        Ok(())
    }
}

/// Tabulated `V*_h` for `h = 1..=H`; `V*_{H+1} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueOracle {
    resolution: usize,
    level: u32,
    state_dim: usize,
    value_lipschitz: f64,
    /// `[h - 1][linear grid index]`
    values: Vec<Vec<f64>>,
}

impl ValueOracle {
    /// Rebuilds an oracle from stored tables.
    pub fn from_tables(
        resolution: usize,
        state_dim: usize,
        value_lipschitz: f64,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if resolution < 4 || !resolution.is_power_of_two() {
            return Err(Error::Config(alloc::format!(
                "oracle resolution must be a power of two >= 4, got {resolution}"
            )));
        }
        let level = resolution.trailing_zeros();
        let cells = DyadicCube::tiling_size(level, state_dim)
            .ok_or_else(|| Error::Config("oracle grid too large".into()))?;
        let horizon = values.len();
        for (i, table) in values.iter().enumerate() {
            if table.len() != cells {
                return Err(Error::Config(alloc::format!(
                    "oracle table for step {} has {} entries, expected {cells}",
                    i + 1,
                    table.len()
                )));
            }
            let cap = (horizon - i) as f64;
            if table.iter().any(|v| !(0.0..=cap).contains(v)) {
                return Err(Error::Domain(alloc::format!(
                    "oracle value for step {} outside [0, {cap}]",
                    i + 1
                )));
            }
        }
        Ok(Self {
            resolution,
            level,
            state_dim,
            value_lipschitz,
            values,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn value_lipschitz(&self) -> f64 {
        self.value_lipschitz
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn grid_width(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    /// Bound on the lookup error of a Lipschitz `V*`: `L_V` times the grid width.
    pub fn grid_error(&self) -> f64 {
        self.value_lipschitz * self.grid_width()
    }

    pub fn grid_len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn grid_point(&self, index: usize) -> Vec<f64> {
        DyadicCube::from_linear(self.level, self.state_dim, index).center()
    }

    pub fn grid_index(&self, x: &[f64]) -> Result<usize> {
        check_unit_point(x, self.state_dim)?;
        Ok(DyadicCube::containing(self.level, x)?.linear_index())
    }

    /// `V*_h(x)` by nearest-grid lookup; zero for `h = H + 1`.
    pub fn value(&self, h: usize, x: &[f64]) -> Result<f64> {
        let horizon = self.horizon();
        if h == horizon + 1 {
            check_unit_point(x, self.state_dim)?;
            return Ok(0.0);
        }
        if h == 0 || h > horizon {
            return Err(Error::Domain(alloc::format!(
                "oracle has no value for step {h}"
            )));
        }
        Ok(self.values[h - 1][self.grid_index(x)?])
    }
}

/// One generator per Monte-Carlo draw, shared by every `(x, a)` of a step.
fn draw_streams(seed: u64, h: usize, draws: usize) -> Vec<ChaCha8Rng> {
    (0..draws)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((h as u64) << 32) | j as u64);
            rng
        })
        .collect()
}

fn draw_count(env: &dyn Environment, mc_draws: usize) -> usize {
    if env.is_deterministic() {
        1
    } else {
        mc_draws
    }
}

/// `E[r + V_{h+1}(x')]` averaged over the given draws.
fn backup(
    env: &dyn Environment,
    h: usize,
    x: &[f64],
    a: &[f64],
    streams: &[ChaCha8Rng],
    next_value: &dyn Fn(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for stream in streams {
        let mut rng = stream.clone();
        let t = env.step(h, x, a, &mut rng)?;
        total += t.reward + next_value(&t.next_state)?;
    }
    Ok(total / streams.len() as f64)
}

/// Backward induction over a uniform state grid.
///
/// For each step and grid state, `V*_h` is the best action-grid value of the
/// mean reward plus the expected next value. Stochastic expectations use
/// `mc_draws` seeded samples with common random numbers across all
/// state-action pairs of a step; deterministic environments use one draw.
pub fn optimal_value_oracle(env: &dyn Environment, cfg: &OracleConfig) -> Result<ValueOracle> {
    cfg.validate()?;
    let horizon = env.horizon();
    let (d_s, d_a) = (env.state_dim(), env.action_dim());
    let level = cfg.resolution.trailing_zeros();
    let action_level = cfg.action_resolution.trailing_zeros();
    let too_big = || Error::Config("oracle grid too large".into());
    let states: Vec<Vec<f64>> = (0..DyadicCube::tiling_size(level, d_s).ok_or_else(too_big)?)
        .map(|i| DyadicCube::from_linear(level, d_s, i).center())
        .collect();
    let actions: Vec<Vec<f64>> = (0..DyadicCube::tiling_size(action_level, d_a)
        .ok_or_else(too_big)?)
        .map(|i| DyadicCube::from_linear(action_level, d_a, i).center())
        .collect();
    let draws = draw_count(env, cfg.mc_draws);
    let separable = env.relocation_cost(&states[0], &actions[0]).is_some();

    let lookup = |table: &[f64], x: &[f64]| -> Result<f64> {
        Ok(table[DyadicCube::containing(level, x)?.linear_index()])
    };
    let mut values: Vec<Vec<f64>> = alloc::vec![Vec::new(); horizon];
    for h in (1..=horizon).rev() {
        let cap = (horizon - h + 1) as f64;
        let streams = draw_streams(cfg.seed, h, draws);
        let next_table = values.get(h).cloned();
        let next_value = |x: &[f64]| -> Result<f64> {
            match &next_table {
                Some(t) => lookup(t, x),
                None => Ok(0.0),
            }
        };
        let table = if separable {
            let gains = actions
                .iter()
                .map(|a| backup(env, h, a, a, &streams, &next_value))
                .collect::<Result<Vec<f64>>>()?;
            states
                .iter()
                .map(|x| {
                    let mut best = f64::NEG_INFINITY;
                    for (a, g) in actions.iter().zip(&gains) {
                        let cost = env.relocation_cost(x, a).unwrap_or(0.0);
                        best = best.max(g - cost);
                    }
                    best.clamp(0.0, cap)
                })
                .collect()
        } else {
            states
                .iter()
                .map(|x| {
                    let mut best = f64::NEG_INFINITY;
                    for a in &actions {
                        best = best.max(backup(env, h, x, a, &streams, &next_value)?);
                    }
                    Ok(best.clamp(0.0, cap))
                })
                .collect::<Result<Vec<f64>>>()?
        };
        values[h - 1] = table;
    }
    ValueOracle::from_tables(cfg.resolution, d_s, env.lipschitz().value, values)
}

/// `Q*_h(x, a) = E[r + V*_{h+1}(x')]` with the oracle's tables for `V*_{h+1}`.
pub fn q_star(
    env: &dyn Environment,
    oracle: &ValueOracle,
    cfg: &OracleConfig,
    h: usize,
    x: &[f64],
    a: &[f64],
) -> Result<f64> {
    if h == 0 || h > oracle.horizon() {
        return Err(Error::Domain(alloc::format!(
            "step {h} outside 1..={}",
            oracle.horizon()
        )));
    }
    let streams = draw_streams(cfg.seed, h, draw_count(env, cfg.mc_draws));
    let q = backup(env, h, x, a, &streams, &|y| oracle.value(h + 1, y))?;
    Ok(q.clamp(0.0, (oracle.horizon() - h + 1) as f64))
}

/// Per-episode and cumulative regret.
#[derive(Debug, Clone, PartialEq)]
pub struct Regret {
    pub per_episode: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Log-log least-squares slope of cumulative regret over the second half.
    pub slope: Option<f64>,
}

/// `regret_k = V*_1(X_1^k) - reward_k` with its prefix sums.
pub fn compute_regret(
    oracle: &ValueOracle,
    start_states: &[Vec<f64>],
    rewards: &[f64],
) -> Result<Regret> {
    if start_states.len() != rewards.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} start states for {} rewards",
            start_states.len(),
            rewards.len()
        )));
    }
    let per_episode = start_states
        .iter()
        .zip(rewards)
        .map(|(x, r)| Ok(oracle.value(1, x)? - r))
        .collect::<Result<Vec<f64>>>()?;
    let cumulative: Vec<f64> = per_episode
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    let k = cumulative.len();
    let slope = loglog_slope(&cumulative, k / 2 + 1, k);
    Ok(Regret {
        per_episode,
        cumulative,
        slope,
    })
}

/// Least-squares slope of `ln cumulative[k-1]` against `ln k` for episodes
/// `first..=last` (1-based), skipping non-positive values. `None` when fewer
/// than two usable points remain.
pub fn loglog_slope(cumulative: &[f64], first: usize, last: usize) -> Option<f64> {
    let first = first.max(1);
    let last = last.min(cumulative.len());
    let points: Vec<(f64, f64)> = (first..=last)
        .filter(|&k| cumulative[k - 1] > 0.0)
        .map(|k| ((k as f64).ln(), cumulative[k - 1].ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
