use alloc::vec::Vec;

use super::{
    check_step, greedy_ball, tree_diagnostics, tree_snapshot, value_cap, Agent, AgentKind,
    CellSnapshot, Diagnostics, Selection,
};
use crate::error::{Error, Result};
use crate::estimators::{
    aggregate_reward, aggregate_transition, reward_bonus, split_due, transition_bonus, BonusParams,
};
use crate::geometry::{check_unit_point, sup_distance, BallId, DyadicCube, PartitionTree};

/// What happened at one step of the current episode.
#[derive(Debug, Clone)]
struct StepRecord {
    ball: BallId,
    /// Balls created by splitting `ball` during this step.
    children: Vec<BallId>,
}

/// Model-based agent over adaptive dyadic partitions, with optimistic
/// one-step value iteration at the end of every episode.
#[derive(Debug, Clone)]
pub struct AdaMbAgent {
    params: BonusParams,
    trees: Vec<PartitionTree>,
    episode: Vec<StepRecord>,
}

impl AdaMbAgent {
    pub fn new(params: BonusParams) -> Result<Self> {
        params.validate()?;
        let trees = (1..=params.horizon)
            .map(|h| {
                PartitionTree::new(
                    h,
                    params.state_dim,
                    params.action_dim,
                    value_cap(params.horizon, h),
                    true,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            params,
            trees,
            episode: Vec::new(),
        })
    }

    pub fn params(&self) -> &BonusParams {
        &self.params
    }

    pub fn tree(&self, h: usize) -> Result<&PartitionTree> {
        check_step(h, self.params.horizon)?;
        Ok(&self.trees[h - 1])
    }

    pub fn trees(&self) -> &[PartitionTree] {
        &self.trees
    }

    /// Lipschitz value estimate
    /// `min_A (V~_h(A) + L_V ||x - center(A)||)`, capped at `H - h + 1`.
    /// Zero beyond the horizon.
    pub fn v_hat(&self, h: usize, x: &[f64]) -> Result<f64> {
        if h == self.params.horizon + 1 {
            return Ok(0.0);
        }
        check_step(h, self.params.horizon)?;
        check_unit_point(x, self.params.state_dim)?;
        let regions = self.region_centers(h);
        Ok(self.v_hat_from(&regions, h, x))
    }

    fn region_centers(&self, h: usize) -> Vec<(Vec<f64>, f64)> {
        if h > self.params.horizon {
            return Vec::new();
        }
        self.trees[h - 1]
            .regions()
            .map(|(cube, v)| (cube.center(), v))
            .collect()
    }

    fn v_hat_from(&self, regions: &[(Vec<f64>, f64)], h: usize, x: &[f64]) -> f64 {
        if h > self.params.horizon {
            return 0.0;
        }
        let lv = self.params.lipschitz.value;
        regions
            .iter()
            .map(|(c, v)| v + lv * sup_distance(x, c))
            .fold(value_cap(self.params.horizon, h), f64::min)
    }

    /// Optimistic one-step backup of ball `id` at step `h`, reading the
    /// next-step values from `next_regions`.
    fn backup(&self, h: usize, id: BallId, next_regions: &[(Vec<f64>, f64)]) -> Result<f64> {
        let tree = &self.trees[h - 1];
        let level = tree.ball(id)?.level();
        let (r_bar, t) = aggregate_reward(tree, id)?;
        let mut q = r_bar + reward_bonus(t, level, &self.params)?;
        if h < self.params.horizon {
            let t_bar = aggregate_transition(tree, id)?;
            let d_s = self.params.state_dim;
            let expected: f64 = t_bar
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(lin, &p)| {
                    let center = DyadicCube::from_linear(level, d_s, lin).center();
                    p * self.v_hat_from(next_regions, h + 1, &center)
                })
                .sum();
            q += expected + transition_bonus(t, level, &self.params)?;
        }
        Ok(q.clamp(0.0, value_cap(self.params.horizon, h)))
    }

    /// Recomputes `V~_h(A) = min(V~_h(A), max_{B: S(B) ⊇ A} Q(B))` for the
    /// induced regions inside `cell`.
    fn refresh_regions(&mut self, h: usize, cell: &DyadicCube) -> Result<()> {
        let tree = &mut self.trees[h - 1];
        for region in tree.regions_within(cell) {
            let center = region.center();
            let best = tree
                .relevant_balls(&center)?
                .into_iter()
                .map(|id| tree.balls()[id.0].q_hat())
                .fold(f64::NEG_INFINITY, f64::max);
            let old = tree.region_value(&region).unwrap_or(best);
            let cap = value_cap(self.params.horizon, h);
            tree.set_region_value(&region, old.min(best).clamp(0.0, cap))?;
        }
        Ok(())
    }
}

impl Agent for AdaMbAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::AdaMb
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
        let tree = &self.trees[h - 1];
        let id = greedy_ball(tree, x)?;
        Ok(Selection {
            cell: id.0,
            action: tree.balls()[id.0].associated_action(),
        })
    }

    fn observe(
        &mut self,
        h: usize,
        _x: &[f64],
        selection: &Selection,
        reward: f64,
        next_state: &[f64],
    ) -> Result<()> {
        check_step(h, self.params.horizon)?;
        if h != self.episode.len() + 1 {
            return Err(Error::State(alloc::format!(
                "observed step {h} but expected step {}",
                self.episode.len() + 1
            )));
        }
        let id = BallId(selection.cell);
        let tree = &mut self.trees[h - 1];
        if !tree.ball(id)?.is_active() {
            return Err(Error::InvalidArgument(alloc::format!(
                "ball {id} is not active"
            )));
        }
        tree.record_sample(id, reward, next_state)?;
        let ball = tree.ball(id)?;
        let children = if split_due(ball.stats().count(), ball.level(), &self.params) {
            tree.split_ball(id)?
        } else {
            Vec::new()
        };
        self.episode.push(StepRecord { ball: id, children });
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        if self.episode.len() != self.params.horizon {
            return Err(Error::State(alloc::format!(
                "episode ended after {} of {} steps",
                self.episode.len(),
                self.params.horizon
            )));
        }
        let episode = core::mem::take(&mut self.episode);

        // All backups read the value estimates of the previous episode.
        let mut updates = Vec::new();
        for (i, step) in episode.iter().enumerate() {
            let h = i + 1;
            let next_regions = self.region_centers(h + 1);
            for &id in core::iter::once(&step.ball).chain(&step.children) {
                updates.push((h, id, self.backup(h, id, &next_regions)?));
            }
        }
        for (h, id, q) in updates {
            self.trees[h - 1].set_q_hat(id, q)?;
        }

        for (i, step) in episode.iter().enumerate() {
            let h = i + 1;
            let cell = self.trees[h - 1].ball(step.ball)?.state_cell().clone();
            self.refresh_regions(h, &cell)?;
        }
        Ok(())
    }

    fn diagnostics(&self) -> Diagnostics {
        tree_diagnostics(&self.trees)
    }

    fn snapshot(&self, h: usize) -> Result<Vec<CellSnapshot>> {
        Ok(tree_snapshot(self.tree(h)?))
    }
}
