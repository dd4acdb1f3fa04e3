//! Per-ball statistics, ancestor aggregation, splitting thresholds and the
//! optimistic confidence bonuses.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{dyadic_width, BallId, DyadicCube, PartitionTree};

/// Visit count, reward tally and next-state tallies of a single ball.
///
/// Next states are tallied over the uniform tiling of `S` at the ball's own
/// level, stored densely by [`DyadicCube::linear_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct BallStats {
    n: u64,
    reward_sum: f64,
    transitions: Option<Vec<u64>>,
}

impl BallStats {
    /// Empty statistics for a ball at `level`. The transition table is
    /// allocated up front (one entry per level-`level` state cube) when
    /// `track_transitions` is set.
    pub fn fresh(level: u32, state_dim: usize, track_transitions: bool) -> Result<Self> {
        let transitions = if track_transitions {
            let size = DyadicCube::tiling_size(level, state_dim).ok_or_else(|| {
                Error::InvalidArgument(alloc::format!(
                    "transition table for level {level} in dimension {state_dim} is too large"
                ))
            })?;
            Some(alloc::vec![0; size])
        } else {
            None
        };
        Ok(Self {
            n: 0,
            reward_sum: 0.0,
            transitions,
        })
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn reward_sum(&self) -> f64 {
        self.reward_sum
    }

    /// Empirical mean reward, `None` before the first sample.
    pub fn mean_reward(&self) -> Option<f64> {
        (self.n > 0).then(|| self.reward_sum / self.n as f64)
    }

    pub fn transition_counts(&self) -> Option<&[u64]> {
        self.transitions.as_deref()
    }

    pub fn transition_count(&self, cube: &DyadicCube) -> u64 {
        self.transitions
            .as_ref()
            .and_then(|t| t.get(cube.linear_index()))
            .copied()
            .unwrap_or(0)
    }

    pub fn transition_entries(&self) -> usize {
        self.transitions.as_ref().map_or(0, Vec::len)
    }

    /// Adds one observation for a ball at `level`.
    pub fn update(&mut self, level: u32, reward: f64, next_state: &[f64]) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::Domain(alloc::format!(
                "reward {reward} outside [0, 1]"
            )));
        }
        let cube = DyadicCube::containing(level, next_state)?;
        if let Some(table) = self.transitions.as_mut() {
            let slot = table.get_mut(cube.linear_index()).ok_or_else(|| {
                Error::InvalidArgument("next state dimension does not match the table".into())
            })?;
            *slot += 1;
        }
        self.n += 1;
        self.reward_sum += reward;
        Ok(())
    }
}

/// Lipschitz constants of the reward, transition kernel and value function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lipschitz {
    pub reward: f64,
    pub transition: f64,
    pub value: f64,
}

/// Shape of the confidence bonuses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BonusForm {
    /// The concentration-based formulas of each agent.
    #[default]
    Theoretical,
    /// `bonus_scale / sqrt(t)` for every bonus term, as used when tuning
    /// agents empirically.
    InverseSqrt,
}

/// Constants entering the splitting rule and the confidence bonuses.
#[derive(Debug, Clone, PartialEq)]
pub struct BonusParams {
    pub delta: f64,
    pub lipschitz: Lipschitz,
    /// Constant of the Wasserstein concentration term.
    pub c_wass: f64,
    /// Multiplier applied to both bonuses.
    pub bonus_scale: f64,
    pub form: BonusForm,
    pub horizon: usize,
    pub episodes: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub phi: f64,
    pub gamma: u32,
}

impl BonusParams {
    /// Theoretical defaults: `delta = 0.05`, `c = 1`, unit scale,
    /// `gamma = d_S` when `d_S > 2` and `d_S + 2` otherwise, and
    /// `phi = H^{(d + d_S) / (d + 1)}`.
    pub fn new(
        horizon: usize,
        episodes: usize,
        state_dim: usize,
        action_dim: usize,
        lipschitz: Lipschitz,
    ) -> Self {
        Self {
            delta: 0.05,
            lipschitz,
            c_wass: 1.0,
            bonus_scale: 1.0,
            form: BonusForm::Theoretical,
            horizon,
            episodes,
            state_dim,
            action_dim,
            phi: default_phi(horizon, state_dim, action_dim),
            gamma: default_gamma(state_dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(alloc::format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        let l = self.lipschitz;
        let positive = [
            ("L_r", l.reward),
            ("L_T", l.transition),
            ("L_V", l.value),
            ("c_wass", self.c_wass),
            ("bonus_scale", self.bonus_scale),
            ("phi", self.phi),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| v.is_nan() || *v <= 0.0) {
            return Err(Error::Config(alloc::format!(
                "{name} must be positive, got {v}"
            )));
        }
        if self.horizon == 0 || self.episodes == 0 || self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Config(
                "horizon, episodes and dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn default_gamma(state_dim: usize) -> u32 {
    if state_dim > 2 {
        state_dim as u32
    } else {
        state_dim as u32 + 2
    }
}

pub fn default_phi(horizon: usize, state_dim: usize, action_dim: usize) -> f64 {
    let d = (state_dim + action_dim) as f64;
    (horizon as f64).powf((d + state_dim as f64) / (d + 1.0))
}

/// `n_+(l) = ceil(phi * 2^{gamma l})`, saturating at `u64::MAX`.
pub fn splitting_threshold(level: u32, params: &BonusParams) -> u64 {
    let raw = params.phi * 2f64.powi((params.gamma * level) as i32);
    let raw = raw.ceil();
    if raw >= u64::MAX as f64 {
        u64::MAX
    } else {
        raw as u64
    }
}

/// A split is due once `n + 1 >= n_+(l)`.
pub fn split_due(count: u64, level: u32, params: &BonusParams) -> bool {
    count.saturating_add(1) >= splitting_threshold(level, params)
}

/// Effective sample count `t = sum_{B' ⊇ B} n(B')`.
pub fn effective_count(tree: &PartitionTree, id: BallId) -> Result<u64> {
    Ok(tree
        .ancestors(id)?
        .into_iter()
        .map(|a| tree.balls()[a.0].stats().count())
        .sum())
}

/// Reward estimate pooled over `id` and its ancestors, with the pooled count.
pub fn aggregate_reward(tree: &PartitionTree, id: BallId) -> Result<(f64, u64)> {
    let chain = tree.ancestors(id)?;
    let (sum, t) = chain.iter().fold((0.0, 0u64), |(s, t), a| {
        let st = tree.balls()[a.0].stats();
        (s + st.reward_sum(), t + st.count())
    });
    if t == 0 {
        return Err(Error::NoData);
    }
    Ok((sum / t as f64, t))
}

/// Transition estimate pooled over `id` and its ancestors, as a probability
/// vector over the level-`l(B)` state tiling (indexed by
/// [`DyadicCube::linear_index`]).
///
/// Each ancestor's mass on a coarse cube is spread uniformly over the
/// `2^{d_S (l(B) - l(B'))}` fine cubes inside it.
pub fn aggregate_transition(tree: &PartitionTree, id: BallId) -> Result<Vec<f64>> {
    if !tree.tracks_transitions() {
        return Err(Error::State("tree does not track transitions".into()));
    }
    let chain = tree.ancestors(id)?;
    let level = tree.ball(id)?.level();
    let d_s = tree.state_dim();
    let size = DyadicCube::tiling_size(level, d_s)
        .ok_or_else(|| Error::InvalidArgument("transition support too large".into()))?;
    let t: u64 = chain
        .iter()
        .map(|a| tree.balls()[a.0].stats().count())
        .sum();
    if t == 0 {
        return Err(Error::NoData);
    }

    let mut out = alloc::vec![0.0; size];
    for a in &chain {
        let ball = &tree.balls()[a.0];
        let Some(counts) = ball.stats().transition_counts() else {
            continue;
        };
        if ball.stats().count() == 0 {
            continue;
        }
        let gap = level - ball.level();
        let share = dyadic_width(gap).powi(d_s as i32);
        for (coarse_lin, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let coarse = DyadicCube::from_linear(ball.level(), d_s, coarse_lin);
            let mass = c as f64 * share;
            for_each_subcube(&coarse, level, |fine| out[fine] += mass);
        }
    }
    let inv_t = 1.0 / t as f64;
    out.iter_mut().for_each(|m| *m *= inv_t);
    Ok(out)
}

/// Calls `f` with the linear index of every level-`level` cube inside `cube`.
fn for_each_subcube(cube: &DyadicCube, level: u32, mut f: impl FnMut(usize)) {
    let gap = level - cube.level();
    let dim = cube.dim();
    let per_axis = 1u64 << gap;
    let base: Vec<u64> = cube.index().iter().map(|&i| i << gap).collect();
    let mut offset = alloc::vec![0u64; dim];
    loop {
        let lin = base
            .iter()
            .zip(&offset)
            .fold(0usize, |acc, (&b, &o)| (acc << level) | (b + o) as usize);
        f(lin);
        let mut axis = dim;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            offset[axis] += 1;
            if offset[axis] < per_axis {
                break;
            }
            offset[axis] = 0;
        }
    }
}

/// Worst-case number of active balls after `k` episodes,
/// `4^d (k / phi)^{d / (d + gamma)}`.
pub fn partition_size_bound(episode: usize, params: &BonusParams) -> f64 {
    let d = params.dim() as f64;
    let k = episode as f64;
    4f64.powf(d) * (k / params.phi).powf(d / (d + params.gamma as f64))
}

/// `bonus_scale / sqrt(t)`.
pub fn inverse_sqrt_bonus(t: u64, params: &BonusParams) -> f64 {
    params.bonus_scale / (t as f64).sqrt()
}

/// Reward bonus `sqrt(8 ln(2 H K^2 / delta) / t) + 4 L_r 2^{-l}`, scaled.
pub fn reward_bonus(t: u64, level: u32, params: &BonusParams) -> Result<f64> {
    if t == 0 {
        return Err(Error::NoData);
    }
    if params.form == BonusForm::InverseSqrt {
        return Ok(inverse_sqrt_bonus(t, params));
    }
    let (h, k) = (params.horizon as f64, params.episodes as f64);
    let conf = (8.0 * (2.0 * h * k * k / params.delta).ln() / t as f64).sqrt();
    let bias = 4.0 * params.lipschitz.reward * dyadic_width(level);
    Ok(params.bonus_scale * (conf + bias))
}

/// Transition bonus. For `d_S > 2`:
/// `L_V ((5 L_T + 4) 2^{-l} + 4 sqrt(ln(H K^2 / delta) / t) + c t^{-1/d_S})`;
/// otherwise
/// `L_V ((5 L_T + 6) 2^{-l} + 4 sqrt(ln(H K^2 / delta) / t) + c sqrt(2^{d_S l} / t))`.
/// Scaled by `bonus_scale`.
pub fn transition_bonus(t: u64, level: u32, params: &BonusParams) -> Result<f64> {
    if t == 0 {
        return Err(Error::NoData);
    }
    if params.form == BonusForm::InverseSqrt {
        return Ok(inverse_sqrt_bonus(t, params));
    }
    let (h, k) = (params.horizon as f64, params.episodes as f64);
    let t = t as f64;
    let l = params.lipschitz;
    let width = dyadic_width(level);
    let conf = 4.0 * ((h * k * k / params.delta).ln() / t).sqrt();
    let d_s = params.state_dim as f64;
    let value = if params.state_dim > 2 {
        (5.0 * l.transition + 4.0) * width + conf + params.c_wass * t.powf(-1.0 / d_s)
    } else {
        let cells = 2f64.powf(d_s * level as f64);
        (5.0 * l.transition + 6.0) * width + conf + params.c_wass * (cells / t).sqrt()
    };
    Ok(params.bonus_scale * l.value * value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn params_1d() -> BonusParams {
        BonusParams::new(
            5,
            2000,
            1,
            1,
            Lipschitz {
                reward: 1.0,
                transition: 1.0,
                value: 1.0,
            },
        )
    }

    #[test]
    fn update_counts_tallies() {
        let mut s = BallStats::fresh(2, 1, true).unwrap();
        s.update(2, 0.4, &[0.6]).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.mean_reward(), Some(0.4));
        let cube = DyadicCube::containing(2, &[0.6]).unwrap();
        assert_eq!(s.transition_count(&cube), 1);
        s.update(2, 0.4, &[0.7]).unwrap();
        assert_eq!(s.transition_counts().unwrap(), &[0, 0, 2, 0]);
        assert!(matches!(s.update(2, 1.2, &[0.1]), Err(Error::Domain(_))));
        assert!(s.update(2, 0.5, &[1.1]).is_err());
        assert_eq!(s.count(), 2);
    }

    #[test]
    fn running_mean_matches_hand_value() {
        let mut s = BallStats::fresh(0, 1, false).unwrap();
        for _ in 0..3 {
            s.update(0, 0.5, &[0.0]).unwrap();
        }
        s.update(0, 0.9, &[0.0]).unwrap();
        assert_eq!(s.count(), 4);
        assert!((s.mean_reward().unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(s.transition_entries(), 0);
    }

    #[test]
    fn thresholds_for_unit_dimensions() {
        let p = params_1d();
        assert_eq!(p.gamma, 3);
        assert!((p.phi - 5.0).abs() < 1e-12);
        assert_eq!(splitting_threshold(0, &p), 5);
        assert_eq!(splitting_threshold(1, &p), 40);
        assert_eq!(splitting_threshold(2, &p), 320);
        assert!(split_due(4, 0, &p));
        assert!(!split_due(3, 0, &p));
    }

    #[test]
    fn thresholds_for_three_dimensional_states() {
        let mut p = params_1d();
        p.state_dim = 3;
        p.action_dim = 3;
        assert_eq!(default_gamma(3), 3);
        assert!((default_phi(5, 3, 3) - 5f64.powf(9.0 / 7.0)).abs() < 1e-12);
        p.phi = default_phi(5, 3, 3);
        for l in 0..4 {
            let ratio = p.phi * 2f64.powi(3 * (l + 1)) / (p.phi * 2f64.powi(3 * l));
            assert_eq!(ratio, 8.0);
        }
    }

    #[test]
    fn reward_bonus_hand_value() {
        let p = params_1d();
        let v = reward_bonus(8, 2, &p).unwrap();
        let expected = (8.0 * (8e8f64).ln() / 8.0).sqrt() + 1.0;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 5.53).abs() < 0.01);
        assert!(reward_bonus(16, 2, &p).unwrap() < v);
        assert_eq!(reward_bonus(0, 2, &p), Err(Error::NoData));
    }

    #[test]
    fn transition_bonus_hand_value() {
        let p = params_1d();
        let v = transition_bonus(8, 1, &p).unwrap();
        let expected = 11.0 * 0.5 + 4.0 * ((4e8f64).ln() / 8.0).sqrt() + (2.0f64 / 8.0).sqrt();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 12.29).abs() < 0.01);
        let mut scaled = p.clone();
        scaled.lipschitz.value = 3.0;
        assert!((transition_bonus(8, 1, &scaled).unwrap() - 3.0 * v).abs() < 1e-9);
    }

    #[test]
    fn transition_bonus_high_dimensional_branch() {
        let mut p = params_1d();
        p.state_dim = 3;
        let mut last = f64::INFINITY;
        for t in [1u64, 2, 8, 64, 1000] {
            let v = transition_bonus(t, 2, &p).unwrap();
            assert!(v < last);
            last = v;
        }
        let tail = transition_bonus(1000, 2, &p).unwrap()
            - (9.0 * 0.25 + 4.0 * ((5.0 * 4e6f64 / 0.05).ln() / 1000.0).sqrt());
        assert!((tail - 0.1).abs() < 1e-12);
    }

    #[test]
    fn aggregate_reward_examples() {
        let mut tree = PartitionTree::new(1, 1, 1, 5.0, true).unwrap();
        let root = tree.root();
        assert_eq!(aggregate_reward(&tree, root), Err(Error::NoData));
        tree.record_sample(root, 0.3, &[0.1]).unwrap();
        assert_eq!(aggregate_reward(&tree, root).unwrap(), (0.3, 1));

        // parent n=4 mean 0.5, child n=4 mean 0.7
        let mut tree = PartitionTree::new(1, 1, 1, 5.0, true).unwrap();
        for _ in 0..4 {
            tree.record_sample(root, 0.5, &[0.1]).unwrap();
        }
        let kid = tree.split_ball(root).unwrap()[0];
        for _ in 0..4 {
            tree.record_sample(kid, 0.7, &[0.1]).unwrap();
        }
        let (r, t) = aggregate_reward(&tree, kid).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
        assert_eq!(t, 8);

        // counts (2, 0, 2), means (0.1, -, 0.9)
        let mut tree = PartitionTree::new(1, 1, 1, 5.0, true).unwrap();
        tree.record_sample(root, 0.1, &[0.1]).unwrap();
        tree.record_sample(root, 0.1, &[0.1]).unwrap();
        let mid = tree.split_ball(root).unwrap()[0];
        let leaf = tree.split_ball(mid).unwrap()[0];
        tree.record_sample(leaf, 0.9, &[0.1]).unwrap();
        tree.record_sample(leaf, 0.9, &[0.1]).unwrap();
        let (r, t) = aggregate_reward(&tree, leaf).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert_eq!(t, 4);
    }

    #[test]
    fn aggregate_transition_examples() {
        // Single level-2 ball with counts (2, 1, 1, 0).
        let mut tree = PartitionTree::new(1, 1, 1, 5.0, true).unwrap();
        let l1 = tree.split_ball(tree.root()).unwrap()[0];
        let l2 = tree.split_ball(l1).unwrap()[0];
        for x in [0.1, 0.2, 0.3, 0.6] {
            tree.record_sample(l2, 0.0, &[x]).unwrap();
        }
        assert_eq!(
            aggregate_transition(&tree, l2).unwrap(),
            vec![0.5, 0.25, 0.25, 0.0]
        );

        // Level-1 parent with frequencies (0.75, 0.25), level-2 child with
        // (0.25, 0.25, 0.5, 0).
        let mut tree = PartitionTree::new(1, 1, 1, 5.0, true).unwrap();
        let parent = tree.split_ball(tree.root()).unwrap()[0];
        for x in [0.1, 0.2, 0.3, 0.7] {
            tree.record_sample(parent, 0.0, &[x]).unwrap();
        }
        let child = tree.split_ball(parent).unwrap()[0];
        for x in [0.1, 0.3, 0.6, 0.7] {
            tree.record_sample(child, 0.0, &[x]).unwrap();
        }
        let tbar = aggregate_transition(&tree, child).unwrap();
        let expected = [0.3125, 0.3125, 0.3125, 0.0625];
        for (got, want) in tbar.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((tbar.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subcube_enumeration_covers_the_block() {
        let cube = DyadicCube::new(1, vec![1, 0]).unwrap();
        let mut seen = Vec::new();
        for_each_subcube(&cube, 2, |lin| seen.push(lin));
        let mut want: Vec<usize> = (0..16)
            .map(|lin| DyadicCube::from_linear(2, 2, lin))
            .filter(|c| cube.contains_cube(c))
            .map(|c| c.linear_index())
            .collect();
        seen.sort();
        want.sort();
        assert_eq!(seen, want);
    }
}
