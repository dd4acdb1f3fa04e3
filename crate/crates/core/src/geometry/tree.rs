use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, Zero};

use super::cube::{dyadic_width, DyadicCube};
use crate::error::{Error, Result};
use crate::estimators::BallStats;

/// Insertion-ordered identifier of a ball within one [`PartitionTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BallId(pub usize);

impl fmt::Display for BallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallStatus {
    Active,
    Split,
}

/// Product of a state cube and an action cube at a common level.
#[derive(Debug, Clone)]
pub struct Ball {
    id: BallId,
    state: DyadicCube,
    action: DyadicCube,
    parent: Option<BallId>,
    children: Vec<BallId>,
    pub(crate) stats: BallStats,
    pub(crate) q_hat: f64,
}

impl Ball {
    pub fn id(&self) -> BallId {
        self.id
    }

    pub fn level(&self) -> u32 {
        self.state.level()
    }

    pub fn state_cell(&self) -> &DyadicCube {
        &self.state
    }

    pub fn action_cell(&self) -> &DyadicCube {
        &self.action
    }

    pub fn parent(&self) -> Option<BallId> {
        self.parent
    }

    pub fn children(&self) -> &[BallId] {
        &self.children
    }

    pub fn status(&self) -> BallStatus {
        if self.children.is_empty() {
            BallStatus::Active
        } else {
            BallStatus::Split
        }
    }

    pub fn is_active(&self) -> bool {
        self.children.is_empty()
    }

    pub fn diameter(&self) -> f64 {
        dyadic_width(self.level())
    }

    /// Action played when this ball is selected: the center of its action cell.
    pub fn associated_action(&self) -> Vec<f64> {
        self.action.center()
    }

    pub fn stats(&self) -> &BallStats {
        &self.stats
    }

    pub fn q_hat(&self) -> f64 {
        self.q_hat
    }

    pub fn contains(&self, x: &[f64], a: &[f64]) -> bool {
        self.state.contains(x) && self.action.contains(a)
    }
}

/// Adaptive dyadic partition of `[0,1]^{d_S} x [0,1]^{d_A}` for one step,
/// together with its induced state partition and the per-region value
/// estimates attached to it.
///
/// Leaves of the tree are the active balls; they tile the space. The induced
/// state partition consists of the minimal state cells among active balls.
#[derive(Debug, Clone)]
pub struct PartitionTree {
    step: usize,
    state_dim: usize,
    action_dim: usize,
    balls: Vec<Ball>,
    regions: BTreeMap<DyadicCube, f64>,
    track_transitions: bool,
    active: usize,
}

impl PartitionTree {
    /// A root-only tree. The root's `q_hat` and the value of the single
    /// induced region both start at `initial_value`.
    pub fn new(
        step: usize,
        state_dim: usize,
        action_dim: usize,
        initial_value: f64,
        track_transitions: bool,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidArgument(
                "state and action dimensions must be positive".into(),
            ));
        }
        let root = Ball {
            id: BallId(0),
            state: DyadicCube::root(state_dim),
            action: DyadicCube::root(action_dim),
            parent: None,
            children: Vec::new(),
            stats: BallStats::fresh(0, state_dim, track_transitions)?,
            q_hat: initial_value,
        };
        let mut regions = BTreeMap::new();
        regions.insert(DyadicCube::root(state_dim), initial_value);
        Ok(Self {
            step,
            state_dim,
            action_dim,
            balls: alloc::vec![root],
            regions,
            track_transitions,
            active: 1,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// `d = d_S + d_A`.
    pub fn dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn tracks_transitions(&self) -> bool {
        self.track_transitions
    }

    pub fn root(&self) -> BallId {
        BallId(0)
    }

    pub fn ball(&self, id: BallId) -> Result<&Ball> {
        self.balls
            .get(id.0)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown ball id {id}")))
    }

    pub(crate) fn ball_mut(&mut self, id: BallId) -> Result<&mut Ball> {
        self.balls
            .get_mut(id.0)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown ball id {id}")))
    }

    /// Every ball ever created, active or split, in id order.
    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn active_balls(&self) -> impl Iterator<Item = &Ball> + '_ {
        self.balls.iter().filter(|b| b.is_active())
    }

    /// `|P_h^k|`.
    pub fn active_count(&self) -> usize {
        self.active
    }

    pub fn max_level(&self) -> u32 {
        self.active_balls().map(Ball::level).max().unwrap_or(0)
    }

    pub fn set_q_hat(&mut self, id: BallId, value: f64) -> Result<()> {
        self.ball_mut(id)?.q_hat = value;
        Ok(())
    }

    /// Records one sample `(reward, next_state)` against ball `id`.
    pub fn record_sample(&mut self, id: BallId, reward: f64, next_state: &[f64]) -> Result<()> {
        let ball = self.ball_mut(id)?;
        let level = ball.level();
        ball.stats.update(level, reward, next_state)
    }

    /// Replaces active ball `id` by its `2^d` dyadic children one level down.
    ///
    /// Children start with empty statistics and inherit the parent's `q_hat`.
    /// If the parent's state cell was an induced region, that region is
    /// replaced by its `2^{d_S}` sub-cells, each inheriting its value.
    pub fn split_ball(&mut self, id: BallId) -> Result<Vec<BallId>> {
        let parent = self.ball(id)?;
        if !parent.is_active() {
            return Err(Error::InvalidArgument(alloc::format!(
                "ball {id} has already been split"
            )));
        }
        let state_children = parent.state.children()?;
        let action_children = parent.action.children()?;
        let q_hat = parent.q_hat;
        let parent_state = parent.state.clone();
        let child_level = parent.level() + 1;

        let mut ids = Vec::with_capacity(state_children.len() * action_children.len());
        for s in &state_children {
            for a in &action_children {
                let child_id = BallId(self.balls.len());
                self.balls.push(Ball {
                    id: child_id,
                    state: s.clone(),
                    action: a.clone(),
                    parent: Some(id),
                    children: Vec::new(),
                    stats: BallStats::fresh(child_level, self.state_dim, self.track_transitions)?,
                    q_hat,
                });
                ids.push(child_id);
            }
        }
        self.balls[id.0].children = ids.clone();
        self.active += ids.len() - 1;

        if let Some(value) = self.regions.remove(&parent_state) {
            for s in state_children {
                self.regions.insert(s, value);
            }
        }
        Ok(ids)
    }

    /// Active balls whose state cell contains `x`.
    pub fn relevant_balls(&self, x: &[f64]) -> Result<Vec<BallId>> {
        super::check_unit_point(x, self.state_dim)?;
        let mut out = Vec::new();
        let mut stack = alloc::vec![self.root()];
        while let Some(id) = stack.pop() {
            let ball = &self.balls[id.0];
            if ball.is_active() {
                out.push(id);
            } else {
                stack.extend(
                    ball.children
                        .iter()
                        .rev()
                        .copied()
                        .filter(|c| self.balls[c.0].state.contains(x)),
                );
            }
        }
        Ok(out)
    }

    /// The unique active ball containing the state-action pair `(x, a)`.
    pub fn ball_containing(&self, x: &[f64], a: &[f64]) -> Result<BallId> {
        super::check_unit_point(x, self.state_dim)?;
        super::check_unit_point(a, self.action_dim)?;
        let mut id = self.root();
        loop {
            let ball = &self.balls[id.0];
            if ball.is_active() {
                return Ok(id);
            }
            id = ball
                .children
                .iter()
                .copied()
                .find(|c| self.balls[c.0].contains(x, a))
                .ok_or_else(|| Error::State("children do not cover their parent".into()))?;
        }
    }

    /// The chain of balls from the root down to `id`, inclusive.
    pub fn ancestors(&self, id: BallId) -> Result<Vec<BallId>> {
        let mut chain = alloc::vec![id];
        let mut cur = self.ball(id)?.parent;
        while let Some(p) = cur {
            chain.push(p);
            cur = self.balls[p.0].parent;
        }
        chain.reverse();
        Ok(chain)
    }

    /// `sum_{B active} 2^{-d l(B)}` in exact arithmetic.
    pub fn kraft_sum(&self) -> Ratio<BigUint> {
        kraft_sum_of_levels(self.active_balls().map(Ball::level), self.dim())
    }

    /// The induced state partition with the current value of each region.
    pub fn regions(&self) -> impl Iterator<Item = (&DyadicCube, f64)> + '_ {
        self.regions.iter().map(|(c, v)| (c, *v))
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn region_value(&self, region: &DyadicCube) -> Option<f64> {
        self.regions.get(region).copied()
    }

    pub fn set_region_value(&mut self, region: &DyadicCube, value: f64) -> Result<()> {
        match self.regions.get_mut(region) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(Error::InvalidArgument(
                "cube is not a region of the induced state partition".into(),
            )),
        }
    }

    /// The induced region containing `x`.
    pub fn region_containing(&self, x: &[f64]) -> Result<(&DyadicCube, f64)> {
        super::check_unit_point(x, self.state_dim)?;
        let mut level = 0;
        loop {
            let cube = DyadicCube::containing(level, x)?;
            if let Some((c, v)) = self.regions.get_key_value(&cube) {
                return Ok((c, *v));
            }
            level += 1;
            if level > self.max_level() {
                return Err(Error::State("induced partition does not cover x".into()));
            }
        }
    }

    /// Induced regions contained in `cell`.
    pub fn regions_within(&self, cell: &DyadicCube) -> Vec<DyadicCube> {
        self.regions
            .keys()
            .filter(|r| cell.contains_cube(r))
            .cloned()
            .collect()
    }

    /// Transition-table entries actually allocated by active balls.
    pub fn transition_entries(&self) -> usize {
        self.active_balls()
            .map(|b| b.stats.transition_entries())
            .sum()
    }

    /// Transition-table entries allocated by all balls, including split
    /// ancestors kept for aggregation.
    pub fn transition_entries_all(&self) -> usize {
        self.balls
            .iter()
            .map(|b| b.stats.transition_entries())
            .sum()
    }
}

/// `sum_l 2^{-dim * l}` over the given levels, as an exact rational.
pub fn kraft_sum_of_levels(levels: impl IntoIterator<Item = u32>, dim: usize) -> Ratio<BigUint> {
    let levels: Vec<u32> = levels.into_iter().collect();
    let Some(&deepest) = levels.iter().max() else {
        return Ratio::zero();
    };
    let one = BigUint::one();
    let shift = |l: u32| dim * (deepest - l) as usize;
    let numer = levels
        .iter()
        .fold(BigUint::zero(), |acc, &l| acc + (&one << shift(l)));
    Ratio::new(numer, one << (dim * deepest as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tree_1d() -> PartitionTree {
        PartitionTree::new(1, 1, 1, 5.0, true).unwrap()
    }

    fn cells(tree: &PartitionTree, ids: &[BallId]) -> Vec<(Vec<u64>, Vec<u64>, u32)> {
        let mut out: Vec<_> = ids
            .iter()
            .map(|&id| {
                let b = tree.ball(id).unwrap();
                (
                    b.state_cell().index().to_vec(),
                    b.action_cell().index().to_vec(),
                    b.level(),
                )
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn splitting_the_root_in_one_dimension() {
        let mut tree = tree_1d();
        let kids = tree.split_ball(tree.root()).unwrap();
        assert_eq!(kids.len(), 4);
        assert_eq!(
            cells(&tree, &kids),
            vec![
                (vec![0], vec![0], 1),
                (vec![0], vec![1], 1),
                (vec![1], vec![0], 1),
                (vec![1], vec![1], 1)
            ]
        );
        for &k in &kids {
            let b = tree.ball(k).unwrap();
            assert_eq!(b.diameter(), 0.5);
            assert_eq!(b.q_hat(), 5.0);
            assert_eq!(b.stats().count(), 0);
            assert_eq!(b.parent(), Some(tree.root()));
        }
        assert_eq!(tree.ball(tree.root()).unwrap().status(), BallStatus::Split);
        assert_eq!(tree.region_count(), 2);
    }

    #[test]
    fn four_dimensional_split_has_sixteen_children() {
        let mut tree = PartitionTree::new(1, 2, 2, 1.0, false).unwrap();
        let kids = tree.split_ball(tree.root()).unwrap();
        assert_eq!(kids.len(), 16);
        assert_eq!(tree.active_count(), 16);
    }

    #[test]
    fn splitting_twice_is_rejected() {
        let mut tree = tree_1d();
        tree.split_ball(tree.root()).unwrap();
        assert!(matches!(
            tree.split_ball(tree.root()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(tree.split_ball(BallId(99)).is_err());
    }

    #[test]
    fn relevant_balls_small_cases() {
        let mut tree = tree_1d();
        assert_eq!(tree.relevant_balls(&[0.3]).unwrap(), vec![tree.root()]);
        tree.split_ball(tree.root()).unwrap();
        let rel = tree.relevant_balls(&[0.25]).unwrap();
        assert_eq!(rel.len(), 2);
        for id in rel {
            assert_eq!(tree.ball(id).unwrap().state_cell().index(), &[0]);
        }
        assert!(tree.relevant_balls(&[1.2]).is_err());
    }

    /// The partition drawn in the illustration of the partitioning scheme:
    /// the root is split into B1..B4 and B2 (upper-right quadrant) into
    /// B21..B24; a state in the third quarter sees {B4, B21, B23}.
    #[test]
    fn relevant_balls_for_the_illustrated_partition() {
        let mut tree = tree_1d();
        let level1 = tree.split_ball(tree.root()).unwrap();
        let find = |tree: &PartitionTree, ids: &[BallId], s: u64, a: u64| {
            *ids.iter()
                .find(|&&id| {
                    let b = tree.ball(id).unwrap();
                    b.state_cell().index() == [s] && b.action_cell().index() == [a]
                })
                .unwrap()
        };
        let b2 = find(&tree, &level1, 1, 1);
        let b4 = find(&tree, &level1, 1, 0);
        let level2 = tree.split_ball(b2).unwrap();
        let b21 = find(&tree, &level2, 2, 3);
        let b23 = find(&tree, &level2, 2, 2);
        let mut rel = tree.relevant_balls(&[0.583]).unwrap();
        rel.sort();
        let mut expected = vec![b4, b21, b23];
        expected.sort();
        assert_eq!(rel, expected);
    }

    #[test]
    fn kraft_sums() {
        let mut tree = PartitionTree::new(1, 1, 1, 1.0, false).unwrap();
        assert!(tree.kraft_sum().is_one());
        let kids = tree.split_ball(tree.root()).unwrap();
        assert!(tree.kraft_sum().is_one());
        tree.split_ball(kids[1]).unwrap();
        // 3 * 1/4 + 4 * 1/16
        assert!(tree.kraft_sum().is_one());
        assert_eq!(
            kraft_sum_of_levels([1, 1, 1], 2),
            Ratio::new(BigUint::from(3u32), BigUint::from(4u32))
        );
    }

    #[test]
    fn induced_regions_follow_the_finest_state_cells() {
        let mut tree = tree_1d();
        let kids = tree.split_ball(tree.root()).unwrap();
        let lower = tree.ball(kids[0]).unwrap().state_cell().clone();
        tree.set_region_value(&lower, 3.0).unwrap();
        tree.split_ball(kids[0]).unwrap();
        let regions: Vec<_> = tree
            .regions()
            .map(|(c, v)| (c.level(), c.index()[0], v))
            .collect();
        assert_eq!(regions, vec![(1, 1, 5.0), (2, 0, 3.0), (2, 1, 3.0)]);
        // Splitting the sibling with the same (already refined) state cell
        // leaves the induced partition unchanged.
        tree.split_ball(kids[1]).unwrap();
        assert_eq!(tree.region_count(), 3);
        assert_eq!(tree.region_containing(&[0.3]).unwrap().1, 3.0);
    }
}
