use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{
    check_step, greedy_ball, tree_diagnostics, tree_snapshot, value_cap, Agent, AgentKind,
    CellSnapshot, Diagnostics, Selection,
};
use crate::error::{Error, Result};
use crate::estimators::{effective_count, inverse_sqrt_bonus, BonusForm, BonusParams};
use crate::geometry::{BallId, PartitionTree};

/// Learning rate `(H + 1) / (H + t)`.
pub(crate) fn learning_rate(horizon: usize, t: u64) -> f64 {
    (horizon as f64 + 1.0) / (horizon as f64 + t as f64)
}

/// Model-free bonus `scale * sqrt(H^3 ln(4 H K / delta) / t)`.
pub(crate) fn q_bonus(t: u64, params: &BonusParams) -> f64 {
    if params.form == BonusForm::InverseSqrt {
        return inverse_sqrt_bonus(t, params);
    }
    let h = params.horizon as f64;
    let k = params.episodes as f64;
    params.bonus_scale * (h.powi(3) * (4.0 * h * k / params.delta).ln() / t as f64).sqrt()
}

/// Adaptive model-free baseline: optimistic Q-learning on the same dyadic
/// partition, with splitting threshold `4^l` and no transition model.
///
/// A child's effective visit count includes its ancestors' visits, so the
/// learning rate continues from where the parent stopped.
#[derive(Debug, Clone)]
pub struct AdaQlAgent {
    params: BonusParams,
    trees: Vec<PartitionTree>,
    next_step: usize,
}

impl AdaQlAgent {
    pub fn new(params: BonusParams) -> Result<Self> {
        params.validate()?;
        let trees = (1..=params.horizon)
            .map(|h| {
                PartitionTree::new(
                    h,
                    params.state_dim,
                    params.action_dim,
                    value_cap(params.horizon, h),
                    false,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            params,
            trees,
            next_step: 1,
        })
    }

    pub fn tree(&self, h: usize) -> Result<&PartitionTree> {
        check_step(h, self.params.horizon)?;
        Ok(&self.trees[h - 1])
    }

    pub fn trees(&self) -> &[PartitionTree] {
        &self.trees
    }

    /// `4^l`.
    pub fn splitting_threshold(level: u32) -> u64 {
        1u64.checked_shl(2 * level).unwrap_or(u64::MAX)
    }

    /// `min(H - h + 1, max_{B relevant} Q(B))`, zero beyond the horizon.
    pub fn value(&self, h: usize, x: &[f64]) -> Result<f64> {
        if h == self.params.horizon + 1 {
            return Ok(0.0);
        }
        let tree = self.tree(h)?;
        let best = tree.balls()[greedy_ball(tree, x)?.0].q_hat();
        Ok(best.min(value_cap(self.params.horizon, h)))
    }
}

impl Agent for AdaQlAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::AdaQl
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
        if h != self.next_step {
            return Err(Error::State(alloc::format!(
                "observed step {h} but expected step {}",
                self.next_step
            )));
        }
        let id = BallId(selection.cell);
        if !self.trees[h - 1].ball(id)?.is_active() {
            return Err(Error::InvalidArgument(alloc::format!(
                "ball {id} is not active"
            )));
        }
        let next_value = self.value(h + 1, next_state)?;

        let tree = &mut self.trees[h - 1];
        tree.record_sample(id, reward, next_state)?;
        let t = effective_count(tree, id)?;
        let alpha = learning_rate(self.params.horizon, t);
        let old = tree.ball(id)?.q_hat();
        let target = reward + next_value + q_bonus(t, &self.params);
        let q =
            ((1.0 - alpha) * old + alpha * target).clamp(0.0, value_cap(self.params.horizon, h));
        tree.set_q_hat(id, q)?;

        let ball = tree.ball(id)?;
        if ball.stats().count() + 1 >= Self::splitting_threshold(ball.level()) {
            tree.split_ball(id)?;
        }
        self.next_step += 1;
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        if self.next_step != self.params.horizon + 1 {
            return Err(Error::State(alloc::format!(
                "episode ended after {} of {} steps",
                self.next_step - 1,
                self.params.horizon
            )));
        }
        self.next_step = 1;
        Ok(())
    }

    fn diagnostics(&self) -> Diagnostics {
        tree_diagnostics(&self.trees)
    }

    fn snapshot(&self, h: usize) -> Result<Vec<CellSnapshot>> {
        Ok(tree_snapshot(self.tree(h)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Lipschitz;

    fn params() -> BonusParams {
        BonusParams::new(
            3,
            100,
            1,
            1,
            Lipschitz {
                reward: 1.0,
                transition: 1.0,
                value: 3.0,
            },
        )
    }

    #[test]
    fn first_update_overwrites_the_initialization() {
        assert_eq!(learning_rate(5, 1), 1.0);
        let mut p = params();
        p.bonus_scale = 1e-3;
        let mut agent = AdaQlAgent::new(p.clone()).unwrap();
        let sel = agent.select_action(3, &[0.4]).unwrap();
        agent.next_step = 3;
        agent.observe(3, &[0.4], &sel, 0.25, &[0.5]).unwrap();
        // the root split at its first visit; its value carried to the children
        let q = agent.tree(3).unwrap().ball(BallId(0)).unwrap().q_hat();
        assert!((q - (0.25 + q_bonus(1, &p))).abs() < 1e-12);
        let kid = agent.tree(3).unwrap().ball(BallId(1)).unwrap();
        assert_eq!(kid.q_hat(), q);
    }

    #[test]
    fn thresholds_are_powers_of_four() {
        let t: Vec<u64> = (0..3).map(AdaQlAgent::splitting_threshold).collect();
        assert_eq!(t, [1, 4, 16]);
    }

    #[test]
    fn estimates_stay_clamped() {
        let mut agent = AdaQlAgent::new(params()).unwrap();
        for _ in 0..50 {
            for h in 1..=3 {
                let sel = agent.select_action(h, &[0.5]).unwrap();
                agent.observe(h, &[0.5], &sel, 1.0, &[0.5]).unwrap();
            }
            agent.end_episode().unwrap();
        }
        for h in 1..=3 {
            let cap = (3 - h + 1) as f64;
            for b in agent.tree(h).unwrap().balls() {
                assert!((0.0..=cap).contains(&b.q_hat()));
            }
        }
        assert_eq!(agent.diagnostics().transition_entries, 0);
    }
}
