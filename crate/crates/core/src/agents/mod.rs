//! Learning agents behind a common episode protocol.
//!
//! Per episode the harness calls, for `h = 1..=H`, [`Agent::select_action`]
//! followed by [`Agent::observe`], and finally [`Agent::end_episode`].

mod adamb;
mod adaql;
mod grid;

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use adamb::AdaMbAgent;
pub use adaql::AdaQlAgent;
pub use grid::{default_grid_level, grid_level_for_epsilon, EpsMbAgent, EpsQlAgent};

use crate::error::{Error, Result};
use crate::estimators::BonusParams;
use crate::geometry::{BallId, PartitionTree};

/// An action chosen for one step, together with the discretization cell
/// (ball id or grid cell index) it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub cell: usize,
    pub action: Vec<f64>,
}

/// Resource usage reported by an agent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Number of active cells per step, `|P_h^k|` for adaptive agents.
    pub partition_sizes: Vec<usize>,
    /// Transition-table entries currently allocated for active cells.
    pub transition_entries: usize,
    /// Transition-table entries including frozen ancestors.
    pub transition_entries_all: usize,
    /// Cells ever created, active or not.
    pub total_cells: usize,
}

impl Diagnostics {
    pub fn total_partition_size(&self) -> usize {
        self.partition_sizes.iter().sum()
    }
}

/// One discretization cell as exported in partition dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSnapshot {
    pub id: usize,
    pub level: u32,
    pub state_index: Vec<u64>,
    pub action_index: Vec<u64>,
    pub n: u64,
    pub q_hat: f64,
    pub active: bool,
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;
    fn horizon(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn select_action(&mut self, h: usize, x: &[f64]) -> Result<Selection>;
    fn observe(
        &mut self,
        h: usize,
        x: &[f64],
        selection: &Selection,
        reward: f64,
        next_state: &[f64],
    ) -> Result<()>;
    fn end_episode(&mut self) -> Result<()>;
    fn diagnostics(&self) -> Diagnostics;
    /// Every cell of the step-`h` discretization.
    fn snapshot(&self, h: usize) -> Result<Vec<CellSnapshot>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    AdaMb,
    AdaQl,
    EpsQl,
    EpsMb,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::AdaMb,
        AgentKind::AdaQl,
        AgentKind::EpsQl,
        AgentKind::EpsMb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::AdaMb => "adamb",
            AgentKind::AdaQl => "adaql",
            AgentKind::EpsQl => "epsql",
            AgentKind::EpsMb => "epsmb",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, AgentKind::AdaMb | AgentKind::AdaQl)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown agent `{s}`")))
    }
}

/// Builds an agent. `epsilon` is the grid width of the fixed-discretization
/// baselines and is ignored by the adaptive agents.
pub fn build_agent(
    kind: AgentKind,
    params: BonusParams,
    epsilon: Option<f64>,
) -> Result<Box<dyn Agent>> {
    Ok(match kind {
        AgentKind::AdaMb => Box::new(AdaMbAgent::new(params)?),
        AgentKind::AdaQl => Box::new(AdaQlAgent::new(params)?),
        AgentKind::EpsQl => Box::new(EpsQlAgent::new(params, epsilon)?),
        AgentKind::EpsMb => Box::new(EpsMbAgent::new(params, epsilon)?),
    })
}

pub(crate) fn check_step(h: usize, horizon: usize) -> Result<()> {
    if h == 0 || h > horizon {
        return Err(Error::Domain(alloc::format!(
            "step {h} outside 1..={horizon}"
        )));
    }
    Ok(())
}

/// Upper bound `H - h + 1` on any value at step `h`.
pub(crate) fn value_cap(horizon: usize, h: usize) -> f64 {
    (horizon + 1).saturating_sub(h) as f64
}

/// Greedy rule over the relevant balls: highest `q_hat`, then deepest
/// level, then lowest id.
pub(crate) fn greedy_ball(tree: &PartitionTree, x: &[f64]) -> Result<BallId> {
    let relevant = tree.relevant_balls(x)?;
    let balls = tree.balls();
    relevant
        .into_iter()
        .max_by(|&a, &b| {
            let (ba, bb) = (&balls[a.0], &balls[b.0]);
            ba.q_hat()
                .total_cmp(&bb.q_hat())
                .then(ba.level().cmp(&bb.level()))
                .then(b.cmp(&a))
        })
        .ok_or_else(|| Error::State("no relevant ball".into()))
}

pub(crate) fn tree_snapshot(tree: &PartitionTree) -> Vec<CellSnapshot> {
    tree.balls()
        .iter()
        .map(|b| CellSnapshot {
            id: b.id().0,
            level: b.level(),
            state_index: b.state_cell().index().to_vec(),
            action_index: b.action_cell().index().to_vec(),
            n: b.stats().count(),
            q_hat: b.q_hat(),
            active: b.is_active(),
        })
        .collect()
}

pub(crate) fn tree_diagnostics(trees: &[PartitionTree]) -> Diagnostics {
    Diagnostics {
        partition_sizes: trees.iter().map(PartitionTree::active_count).collect(),
        transition_entries: trees.iter().map(PartitionTree::transition_entries).sum(),
        transition_entries_all: trees
            .iter()
            .map(PartitionTree::transition_entries_all)
            .sum(),
        total_cells: trees.iter().map(|t| t.balls().len()).sum(),
    }
}
