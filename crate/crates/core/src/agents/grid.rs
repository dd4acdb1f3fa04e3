use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::adaql::{learning_rate, q_bonus};
use super::{check_step, value_cap, Agent, AgentKind, CellSnapshot, Diagnostics, Selection};
use crate::error::{Error, Result};
use crate::estimators::{inverse_sqrt_bonus, BonusForm, BonusParams};
use crate::geometry::{DyadicCube, MAX_LEVEL};

/// Grid level `ceil(log2(K^{1/(d+2)}))`, i.e. width `2^{-level}` close to the
/// width balancing discretization error against tabular regret.
pub fn default_grid_level(episodes: usize, dim: usize) -> u32 {
    let target = (episodes as f64).powf(1.0 / (dim as f64 + 2.0));
    target.log2().ceil().max(0.0) as u32
}

/// Level of the widest dyadic width not exceeding `epsilon`, and whether
/// `epsilon` was already dyadic.
pub fn grid_level_for_epsilon(epsilon: f64) -> Result<(u32, bool)> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Config(alloc::format!(
            "grid width must be positive, got {epsilon}"
        )));
    }
    if epsilon >= 1.0 {
        return Ok((0, epsilon == 1.0));
    }
    let level = (-epsilon.log2()).ceil() as u32;
    let level = level.min(MAX_LEVEL);
    let exact = (1.0 / (1u64 << level) as f64) == epsilon;
    Ok((level, exact))
}

/// Uniform grid shared by the fixed-discretization baselines.
#[derive(Debug, Clone)]
struct Grid {
    level: u32,
    state_dim: usize,
    action_dim: usize,
    states: usize,
    actions: usize,
}

impl Grid {
    fn new(params: &BonusParams, epsilon: Option<f64>) -> Result<Self> {
        let level = match epsilon {
            Some(eps) => {
                let (level, exact) = grid_level_for_epsilon(eps)?;
                if !exact {
                    log::warn!(
                        "grid width {eps} is not dyadic; using {}",
                        1.0 / (1u64 << level) as f64
                    );
                }
                level
            }
            None => default_grid_level(params.episodes, params.dim()),
        };
        let too_big = || Error::Config(alloc::format!("grid of level {level} is too large"));
        let states = DyadicCube::tiling_size(level, params.state_dim).ok_or_else(too_big)?;
        let actions = DyadicCube::tiling_size(level, params.action_dim).ok_or_else(too_big)?;
        Ok(Self {
            level,
            state_dim: params.state_dim,
            action_dim: params.action_dim,
            states,
            actions,
        })
    }

    fn width(&self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    fn cells(&self) -> usize {
        self.states * self.actions
    }

    fn state_cell(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.state_dim {
            return Err(Error::Domain("state dimension mismatch".into()));
        }
        Ok(DyadicCube::containing(self.level, x)?.linear_index())
    }

    fn action_center(&self, a: usize) -> Vec<f64> {
        DyadicCube::from_linear(self.level, self.action_dim, a).center()
    }

    fn snapshot(&self, n: &[u64], q: &[f64]) -> Vec<CellSnapshot> {
        (0..self.cells())
            .map(|cell| {
                let (s, a) = (cell / self.actions, cell % self.actions);
                CellSnapshot {
                    id: cell,
                    level: self.level,
                    state_index: DyadicCube::from_linear(self.level, self.state_dim, s)
                        .index()
                        .to_vec(),
                    action_index: DyadicCube::from_linear(self.level, self.action_dim, a)
                        .index()
                        .to_vec(),
                    n: n[cell],
                    q_hat: q[cell],
                    active: true,
                }
            })
            .collect()
    }
}

/// Greedy action cell for state cell `s`: highest value, lowest index on ties.
fn argmax_action(q: &[f64], s: usize, actions: usize) -> usize {
    let row = &q[s * actions..(s + 1) * actions];
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (a, &v)| {
            if v > best.1 {
                (a, v)
            } else {
                best
            }
        })
        .0
}

fn max_row(q: &[f64], s: usize, actions: usize) -> f64 {
    q[s * actions..(s + 1) * actions]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn selection(grid: &Grid, q: &[f64], x: &[f64]) -> Result<Selection> {
    let s = grid.state_cell(x)?;
    let a = argmax_action(q, s, grid.actions);
    Ok(Selection {
        cell: s * grid.actions + a,
        action: grid.action_center(a),
    })
}

fn check_selection(grid: &Grid, x: &[f64], selection: &Selection) -> Result<()> {
    let s = grid.state_cell(x)?;
    if selection.cell / grid.actions != s || selection.cell >= grid.cells() {
        return Err(Error::InvalidArgument(
            "selection does not belong to the observed state cell".into(),
        ));
    }
    Ok(())
}

/// Optimistic tabular Q-learning over a uniform `epsilon`-grid.
#[derive(Debug, Clone)]
pub struct EpsQlAgent {
    params: BonusParams,
    grid: Grid,
    /// `[h][cell]`, cell = state * actions + action
    q: Vec<Vec<f64>>,
    n: Vec<Vec<u64>>,
    next_step: usize,
}

impl EpsQlAgent {
    pub fn new(params: BonusParams, epsilon: Option<f64>) -> Result<Self> {
        params.validate()?;
        let grid = Grid::new(&params, epsilon)?;
        let q = (1..=params.horizon)
            .map(|h| alloc::vec![value_cap(params.horizon, h); grid.cells()])
            .collect();
        let n = (0..params.horizon)
            .map(|_| alloc::vec![0; grid.cells()])
            .collect();
        Ok(Self {
            params,
            grid,
            q,
            n,
            next_step: 1,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.grid.width()
    }

    pub fn cell_count(&self) -> usize {
        self.grid.cells()
    }
}

impl Agent for EpsQlAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::EpsQl
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn state_dim(&self) -> usize {
        self.params.state_dim
    }

    fn action_dim(&self) -> usize {
        self.params.action_dim
    }

    fn select_action(&mut self, h: usize, x: &[f64]) -> Result<Selection> {
        check_step(h, self.params.horizon)?;
        selection(&self.grid, &self.q[h - 1], x)
    }

    fn observe(
        &mut self,
        h: usize,
        x: &[f64],
        selection: &Selection,
        reward: f64,
        next_state: &[f64],
    ) -> Result<()> {
        check_step(h, self.params.horizon)?;
        if h != self.next_step {
            return Err(Error::State(alloc::format!(
                "observed step {h} but expected step {}",
                self.next_step
            )));
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::Domain(alloc::format!(
                "reward {reward} outside [0, 1]"
            )));
        }
        check_selection(&self.grid, x, selection)?;
        let horizon = self.params.horizon;
        let next_value = if h == horizon {
            0.0
        } else {
            let s_next = self.grid.state_cell(next_state)?;
            max_row(&self.q[h], s_next, self.grid.actions).min(value_cap(horizon, h + 1))
        };
        let cell = selection.cell;
        self.n[h - 1][cell] += 1;
        let t = self.n[h - 1][cell];
        let alpha = learning_rate(horizon, t);
        let q = &mut self.q[h - 1][cell];
        let target = reward + next_value + q_bonus(t, &self.params);
        *q = ((1.0 - alpha) * *q + alpha * target).clamp(0.0, value_cap(horizon, h));
        self.next_step += 1;
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        if self.next_step != self.params.horizon + 1 {
            return Err(Error::State("episode ended early".into()));
        }
        self.next_step = 1;
        Ok(())
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            partition_sizes: alloc::vec![self.grid.cells(); self.params.horizon],
            transition_entries: 0,
            transition_entries_all: 0,
            total_cells: self.grid.cells() * self.params.horizon,
        }
    }

    fn snapshot(&self, h: usize) -> Result<Vec<CellSnapshot>> {
        check_step(h, self.params.horizon)?;
        Ok(self.grid.snapshot(&self.n[h - 1], &self.q[h - 1]))
    }
}

/// One-step optimistic value iteration (UCBVI-style) on a uniform
/// `epsilon`-grid. Theoretical bonuses are Hoeffding terms
/// `scale * sqrt(8 ln(2 H K^2 / delta) / n)` on rewards and
/// `scale * (H - h) sqrt(2 ln(2 S H K^2 / delta) / n)` on transitions.
#[derive(Debug, Clone)]
pub struct EpsMbAgent {
    params: BonusParams,
    grid: Grid,
    q: Vec<Vec<f64>>,
    /// `[h][state]`
    v: Vec<Vec<f64>>,
    n: Vec<Vec<u64>>,
    reward_sum: Vec<Vec<f64>>,
    /// `[h][cell * states + next_state]`
    transitions: Vec<Vec<u32>>,
    visited: Vec<usize>,
}

impl EpsMbAgent {
    pub fn new(params: BonusParams, epsilon: Option<f64>) -> Result<Self> {
        params.validate()?;
        let grid = Grid::new(&params, epsilon)?;
        let horizon = params.horizon;
        let table = grid
            .cells()
            .checked_mul(grid.states)
            .ok_or_else(|| Error::Config("transition table too large".into()))?;
        Ok(Self {
            q: (1..=horizon)
                .map(|h| alloc::vec![value_cap(horizon, h); grid.cells()])
                .collect(),
            v: (1..=horizon)
                .map(|h| alloc::vec![value_cap(horizon, h); grid.states])
                .collect(),
            n: (0..horizon).map(|_| alloc::vec![0; grid.cells()]).collect(),
            reward_sum: (0..horizon)
                .map(|_| alloc::vec![0.0; grid.cells()])
                .collect(),
            transitions: (0..horizon).map(|_| alloc::vec![0; table]).collect(),
            visited: Vec::with_capacity(horizon),
            params,
            grid,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.grid.width()
    }

    pub fn cell_count(&self) -> usize {
        self.grid.cells()
    }

    fn backup(&self, h: usize, cell: usize) -> f64 {
        let p = &self.params;
        let (hf, k) = (p.horizon as f64, p.episodes as f64);
        let n = self.n[h - 1][cell] as f64;
        let r_bar = self.reward_sum[h - 1][cell] / n;
        let inverse_sqrt = p.form == BonusForm::InverseSqrt;
        let reward_bonus = if inverse_sqrt {
            inverse_sqrt_bonus(self.n[h - 1][cell], p)
        } else {
            p.bonus_scale * (8.0 * (2.0 * hf * k * k / p.delta).ln() / n).sqrt()
        };
        let mut q = r_bar + reward_bonus;
        if h < p.horizon {
            let states = self.grid.states;
            let row = &self.transitions[h - 1][cell * states..(cell + 1) * states];
            let expected: f64 = row
                .iter()
                .zip(&self.v[h])
                .filter(|(&c, _)| c > 0)
                .map(|(&c, &v)| c as f64 * v)
                .sum::<f64>()
                / n;
            let bonus = if inverse_sqrt {
                inverse_sqrt_bonus(self.n[h - 1][cell], p)
            } else {
                let log_term = (2.0 * states as f64 * hf * k * k / p.delta).ln();
                let remaining = (p.horizon - h) as f64;
                p.bonus_scale * remaining * (2.0 * log_term / n).sqrt()
            };
            q += expected + bonus;
        }
        q.clamp(0.0, value_cap(p.horizon, h))
    }
}

impl Agent for EpsMbAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::EpsMb
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn state_dim(&self) -> usize {
        self.params.state_dim
    }

    fn action_dim(&self) -> usize {
        self.params.action_dim
    }

    fn select_action(&mut self, h: usize, x: &[f64]) -> Result<Selection> {
        check_step(h, self.params.horizon)?;
        selection(&self.grid, &self.q[h - 1], x)
    }

    fn observe(
        &mut self,
        h: usize,
        x: &[f64],
        selection: &Selection,
        reward: f64,
        next_state: &[f64],
    ) -> Result<()> {
        check_step(h, self.params.horizon)?;
        if h != self.visited.len() + 1 {
            return Err(Error::State(alloc::format!(
                "observed step {h} but expected step {}",
                self.visited.len() + 1
            )));
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::Domain(alloc::format!(
                "reward {reward} outside [0, 1]"
            )));
        }
        check_selection(&self.grid, x, selection)?;
        let s_next = self.grid.state_cell(next_state)?;
        let cell = selection.cell;
        self.n[h - 1][cell] += 1;
        self.reward_sum[h - 1][cell] += reward;
        self.transitions[h - 1][cell * self.grid.states + s_next] += 1;
        self.visited.push(cell);
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        if self.visited.len() != self.params.horizon {
            return Err(Error::State("episode ended early".into()));
        }
        let visited = core::mem::take(&mut self.visited);
        let updates: Vec<f64> = visited
            .iter()
            .enumerate()
            .map(|(i, &cell)| self.backup(i + 1, cell))
            .collect();
        for (i, (&cell, q)) in visited.iter().zip(updates).enumerate() {
            self.q[i][cell] = q;
        }
        for (i, &cell) in visited.iter().enumerate() {
            let s = cell / self.grid.actions;
            let best = max_row(&self.q[i], s, self.grid.actions);
            let v = &mut self.v[i][s];
            *v = v.min(best);
        }
        Ok(())
    }

    fn diagnostics(&self) -> Diagnostics {
        let entries = self.transitions.iter().map(Vec::len).sum();
        Diagnostics {
            partition_sizes: alloc::vec![self.grid.cells(); self.params.horizon],
            transition_entries: entries,
            transition_entries_all: entries,
            total_cells: self.grid.cells() * self.params.horizon,
        }
    }

    fn snapshot(&self, h: usize) -> Result<Vec<CellSnapshot>> {
        check_step(h, self.params.horizon)?;
        Ok(self.grid.snapshot(&self.n[h - 1], &self.q[h - 1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Lipschitz;

    fn params(episodes: usize) -> BonusParams {
        BonusParams::new(
            2,
            episodes,
            1,
            1,
            Lipschitz {
                reward: 1.0,
                transition: 1.0,
                value: 2.0,
            },
        )
    }

    #[test]
    fn grid_counts_and_snapping() {
        let agent = EpsMbAgent::new(params(100), Some(0.25)).unwrap();
        assert_eq!(agent.cell_count(), 16);
        assert_eq!(agent.grid.state_cell(&[0.61]).unwrap(), 2);
        // (1/eps)^{2 d_S + d_A} entries per step
        assert_eq!(agent.diagnostics().transition_entries, 2 * 64);
    }

    #[test]
    fn epsilon_rounding() {
        assert_eq!(grid_level_for_epsilon(0.25).unwrap(), (2, true));
        assert_eq!(grid_level_for_epsilon(0.3).unwrap(), (2, false));
        assert_eq!(grid_level_for_epsilon(0.1).unwrap(), (4, false));
        assert!(grid_level_for_epsilon(0.0).is_err());
        // K = 2000, d = 2: K^{1/4} ~ 6.69 -> width 1/8
        assert_eq!(default_grid_level(2000, 2), 3);
    }

    #[test]
    fn eps_agents_learn_a_trivial_bandit() {
        // Reward 1 only for the top action cell, terminal after two steps.
        for kind in [AgentKind::EpsQl, AgentKind::EpsMb] {
            let mut p = params(400);
            p.bonus_scale = 0.01;
            let mut agent = super::super::build_agent(kind, p, Some(0.5)).unwrap();
            for _ in 0..400 {
                for h in 1..=2 {
                    let sel = agent.select_action(h, &[0.2]).unwrap();
                    let r = if sel.action[0] > 0.5 { 1.0 } else { 0.0 };
                    agent.observe(h, &[0.2], &sel, r, &[0.2]).unwrap();
                }
                agent.end_episode().unwrap();
            }
            let sel = agent.select_action(1, &[0.2]).unwrap();
            assert_eq!(sel.action, [0.75], "{kind}");
        }
    }
}
