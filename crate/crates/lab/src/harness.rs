//! Episode loop, seeded sweeps and result persistence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adamb_core::agents::{
    build_agent, default_grid_level, grid_level_for_epsilon, Agent, AgentKind,
};
use adamb_core::envs::Environment;
use adamb_core::estimators::{partition_size_bound, BonusParams};
use adamb_core::oracle::{loglog_slope, optimal_value_oracle, ValueOracle};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::formats::{
    fingerprint, read_json, write_csv, write_json, EpisodeRow, OracleFile, PartitionDump,
};

/// Episodes averaged for the end-of-run reward.
pub const FINAL_WINDOW: usize = 200;

/// Critical value of the standard-normal confidence intervals.
pub const Z_95: f64 = 1.96;

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub start_state: Vec<f64>,
    /// `sum_h R_h`
    pub reward: f64,
    /// Cell (ball id or grid index) played at each step.
    pub cells: Vec<usize>,
    /// Active cells per step after the episode's update.
    pub partition_sizes: Vec<usize>,
    pub wall_ms: f64,
}

/// Plays `H` steps of select, step and observe, then closes the episode.
pub fn run_episode(
    agent: &mut dyn Agent,
    env: &dyn Environment,
    rng: &mut dyn RngCore,
    timing: bool,
) -> Result<EpisodeRecord> {
    if agent.horizon() != env.horizon()
        || agent.state_dim() != env.state_dim()
        || agent.action_dim() != env.action_dim()
    {
        return Err(LabError::Config(format!(
            "agent (H={}, d_S={}, d_A={}) does not match environment (H={}, d_S={}, d_A={})",
            agent.horizon(),
            agent.state_dim(),
            agent.action_dim(),
            env.horizon(),
            env.state_dim(),
            env.action_dim()
        )));
    }
    let clock = Instant::now();
    let start_state = env.reset(rng);
    let mut x = start_state.clone();
    let mut reward = 0.0;
    let mut cells = Vec::with_capacity(env.horizon());
    for h in 1..=env.horizon() {
        let sel = agent.select_action(h, &x)?;
        let t = env.step(h, &x, &sel.action, rng)?;
        agent.observe(h, &x, &sel, t.reward, &t.next_state)?;
        reward += t.reward;
        cells.push(sel.cell);
        x = t.next_state;
    }
    agent.end_episode()?;
    Ok(EpisodeRecord {
        start_state,
        reward,
        cells,
        partition_sizes: agent.diagnostics().partition_sizes,
        wall_ms: if timing {
            clock.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        },
    })
}

/// One `(agent, bonus_scale, epsilon, seed)` run of `K` episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub agent: String,
    pub bonus_scale: f64,
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
    /// Grid width of the fixed-discretization agents.
    pub epsilon: Option<f64>,
    /// Width requested by an epsilon sweep, if any.
    #[serde(default)]
    pub sweep_epsilon: Option<f64>,
    /// Partition-size bound checks performed and failed.
    pub bound_checks: usize,
    pub bound_violations: usize,
    pub transition_entries: usize,
    pub transition_entries_all: usize,
    pub total_cells: usize,
    pub partition: PartitionDump,
}

impl CellResult {
    pub fn name(&self) -> String {
        cell_name(&self.agent, self.bonus_scale, self.sweep_epsilon, self.seed)
    }

    pub fn final_partition_size(&self) -> usize {
        self.rows
            .last()
            .map_or(0, |r| r.partition_sizes.iter().sum())
    }
}

pub fn cell_name(agent: &str, bonus_scale: f64, epsilon: Option<f64>, seed: u64) -> String {
    format!("{}_seed{seed}", group_name(agent, bonus_scale, epsilon))
}

pub fn group_name(agent: &str, bonus_scale: f64, epsilon: Option<f64>) -> String {
    match epsilon {
        Some(e) => format!("{agent}_eps{e}_scale{bonus_scale}"),
        None => format!("{agent}_scale{bonus_scale}"),
    }
}

/// Grid width a fixed-discretization agent will use.
pub fn grid_epsilon(epsilon: Option<f64>, params: &BonusParams) -> Result<f64> {
    let level = match epsilon {
        Some(eps) => grid_level_for_epsilon(eps)?.0,
        None => default_grid_level(params.episodes, params.dim()),
    };
    Ok(0.5f64.powi(level as i32))
}

/// Runs one sweep cell from a fresh agent. `epsilon` is ignored by the
/// adaptive agents.
pub fn run_cell(
    cfg: &ExperimentConfig,
    env: &dyn Environment,
    oracle: &ValueOracle,
    kind: AgentKind,
    bonus_scale: f64,
    epsilon: Option<f64>,
    seed: u64,
) -> Result<CellResult> {
    let epsilon = epsilon.filter(|_| !kind.is_adaptive());
    let params = cfg.bonus_params(env, bonus_scale);
    let mut agent = build_agent(kind, params.clone(), epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(cfg.episodes);
    let (mut checks, mut violations) = (0, 0);
    let mut cum_regret = 0.0;
    for k in 1..=cfg.episodes {
        let rec = run_episode(agent.as_mut(), env, &mut rng, cfg.timing)?;
        let regret = oracle.value(1, &rec.start_state)? - rec.reward;
        cum_regret += regret;
        if kind == AgentKind::AdaMb && (k % cfg.checkpoint_every == 0 || k == cfg.episodes) {
            let bound = partition_size_bound(k, &params);
            for (h, &size) in rec.partition_sizes.iter().enumerate() {
                checks += 1;
                if size as f64 > bound {
                    violations += 1;
                    log::warn!(
                        "{}: |P_{}^{k}| = {size} exceeds the bound {bound:.1}",
                        cell_name(kind.as_str(), bonus_scale, epsilon, seed),
                        h + 1
                    );
                }
            }
        }
        rows.push(EpisodeRow {
            seed,
            episode: k,
            reward: rec.reward,
            regret,
            cum_regret,
            partition_sizes: rec.partition_sizes,
            wall_ms: rec.wall_ms,
        });
    }
    let diag = agent.diagnostics();
    let partition = PartitionDump::capture(
        agent.as_ref(),
        bonus_scale,
        seed,
        cfg.episodes,
        params.phi,
        params.gamma,
        config_echo(cfg),
    )?;
    Ok(CellResult {
        agent: kind.to_string(),
        bonus_scale,
        seed,
        rows,
        epsilon: (!kind.is_adaptive())
            .then(|| grid_epsilon(epsilon, &params))
            .transpose()?,
        sweep_epsilon: epsilon,
        bound_checks: checks,
        bound_violations: violations,
        transition_entries: diag.transition_entries,
        transition_entries_all: diag.transition_entries_all,
        total_cells: diag.total_cells,
        partition,
    })
}

/// Mean and half-width of the standard-normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ci: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                ci: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z_95 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, ci }
    }
}

/// Per-episode mean and interval across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub mean: Vec<f64>,
    pub ci: Vec<f64>,
}

impl Series {
    fn across(cells: &[&CellResult], value: impl Fn(&EpisodeRow) -> f64) -> Self {
        let episodes = cells.iter().map(|c| c.rows.len()).min().unwrap_or(0);
        let stats: Vec<Stat> = (0..episodes)
            .map(|k| Stat::of(&cells.iter().map(|c| value(&c.rows[k])).collect::<Vec<_>>()))
            .collect();
        Self {
            mean: stats.iter().map(|s| s.mean).collect(),
            ci: stats.iter().map(|s| s.ci).collect(),
        }
    }
}

/// Aggregate over the seeds of one `(agent, bonus_scale, epsilon)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub agent: String,
    pub bonus_scale: f64,
    pub seeds: usize,
    pub epsilon: Option<f64>,
    pub sweep_epsilon: Option<f64>,
    /// Total cumulative reward `sum_k sum_h R_h`.
    pub cum_reward: Stat,
    /// Mean episode reward over the last episodes (up to [`FINAL_WINDOW`]).
    pub final_window_reward: Stat,
    pub cum_regret: Stat,
    /// Log-log slope of cumulative regret over the second half, per seed.
    pub regret_slope: Option<Stat>,
    /// Same slope, of the seed-averaged cumulative regret.
    pub mean_regret_slope: Option<f64>,
    /// Active cells summed over steps at the end of the run.
    pub final_partition_size: Stat,
    /// Mean active cells per step at the end of the run.
    pub final_partition_sizes: Vec<f64>,
    pub transition_entries: Stat,
    pub bound_checks: usize,
    pub bound_violations: usize,
    pub episode_reward: Series,
    pub cum_regret_series: Series,
}

impl GroupSummary {
    pub fn from_cells(cells: &[&CellResult]) -> Self {
        let first = cells[0];
        let stat = |f: &dyn Fn(&CellResult) -> f64| {
            Stat::of(&cells.iter().map(|c| f(c)).collect::<Vec<_>>())
        };
        let cum_regret_series = Series::across(cells, |r| r.cum_regret);
        let k = cum_regret_series.mean.len();
        let slopes: Vec<f64> = cells
            .iter()
            .filter_map(|c| {
                let cum: Vec<f64> = c.rows.iter().map(|r| r.cum_regret).collect();
                loglog_slope(&cum, cum.len() / 2 + 1, cum.len())
            })
            .collect();
        Self {
            agent: first.agent.clone(),
            bonus_scale: first.bonus_scale,
            seeds: cells.len(),
            epsilon: first.epsilon,
            sweep_epsilon: first.sweep_epsilon,
            cum_reward: stat(&|c| c.rows.iter().map(|r| r.reward).sum()),
            final_window_reward: stat(&|c| {
                let w = c.rows.len().min(FINAL_WINDOW);
                c.rows[c.rows.len() - w..]
                    .iter()
                    .map(|r| r.reward)
                    .sum::<f64>()
                    / w as f64
            }),
            cum_regret: stat(&|c| c.rows.last().map_or(0.0, |r| r.cum_regret)),
            regret_slope: (!slopes.is_empty()).then(|| Stat::of(&slopes)),
            mean_regret_slope: loglog_slope(&cum_regret_series.mean, k / 2 + 1, k),
            final_partition_size: stat(&|c| c.final_partition_size() as f64),
            final_partition_sizes: (0..first.partition.horizon)
                .map(|h| {
                    cells
                        .iter()
                        .map(|c| c.rows.last().map_or(0, |r| r.partition_sizes[h]) as f64)
                        .sum::<f64>()
                        / cells.len() as f64
                })
                .collect(),
            transition_entries: stat(&|c| c.transition_entries as f64),
            bound_checks: cells.iter().map(|c| c.bound_checks).sum(),
            bound_violations: cells.iter().map(|c| c.bound_violations).sum(),
            episode_reward: Series::across(cells, |r| r.reward),
            cum_regret_series,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: String,
    pub horizon: usize,
    pub episodes: usize,
    /// Oracle `V*_1` at the start state.
    pub v_star_1: f64,
    pub oracle_fingerprint: String,
    pub groups: Vec<GroupSummary>,
    /// Bonus scale with the largest mean cumulative reward, per agent.
    pub best_scale: BTreeMap<String, f64>,
    /// Grid width chosen jointly with the best scale, per grid agent.
    pub best_epsilon: BTreeMap<String, f64>,
}

impl Summary {
    /// The group of `agent` at `bonus_scale` and, for grid agents, grid
    /// width `epsilon` (any width when `None`).
    pub fn group(
        &self,
        agent: AgentKind,
        bonus_scale: f64,
        epsilon: Option<f64>,
    ) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| {
            g.agent == agent.as_str()
                && g.bonus_scale == bonus_scale
                && epsilon.is_none_or(|e| g.epsilon == Some(e))
        })
    }

    /// The group of `agent` at its best bonus scale and grid width.
    pub fn tuned(&self, agent: AgentKind) -> Option<&GroupSummary> {
        self.group(
            agent,
            *self.best_scale.get(agent.as_str())?,
            self.best_epsilon.get(agent.as_str()).copied(),
        )
    }
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub oracle: PathBuf,
    pub csvs: Vec<PathBuf>,
    pub partitions: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

fn oracle_fingerprint(cfg: &ExperimentConfig, env: &dyn Environment) -> String {
    let lip = env.lipschitz();
    let oc = cfg.oracle.to_core();
    fingerprint(&json!({
        "env": cfg.env,
        "horizon": cfg.horizon,
        "value_lipschitz": lip.value,
        "oracle": {
            "resolution": oc.resolution,
            "action_resolution": oc.action_resolution,
            "mc_draws": oc.mc_draws,
            "seed": oc.seed,
        },
    }))
}

/// Loads the oracle cached at `path` when its fingerprint matches, else
/// builds and stores it.
pub fn load_or_build_oracle(
    cfg: &ExperimentConfig,
    env: &dyn Environment,
    path: &Path,
) -> Result<(ValueOracle, String)> {
    let fp = oracle_fingerprint(cfg, env);
    if path.exists() {
        let file: OracleFile = read_json(path)?;
        if file.fingerprint == fp {
            return Ok((file.into_oracle()?, fp));
        }
        log::info!("{}: stale oracle, rebuilding", path.display());
    }
    let oracle = optimal_value_oracle(env, &cfg.oracle.to_core())?;
    write_json(path, &OracleFile::new(fp.clone(), &oracle))?;
    Ok((oracle, fp))
}

/// Runs every `(agent, bonus_scale, epsilon, seed)` cell, skipping cells whose result
/// file already exists, then writes merged CSVs, partition dumps and the
/// summary.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunSummary> {
    let env = cfg.build_env()?;
    let out = cfg.output.clone();
    let oracle_path = out.join("oracle.json");
    let (oracle, fp) = load_or_build_oracle(cfg, env.as_ref(), &oracle_path)?;
    let start = env.reset(&mut ChaCha8Rng::seed_from_u64(0));
    let v_star_1 = oracle.value(1, &start)?;
    let agents = cfg.agents()?;

    let widths = |kind: AgentKind| {
        if kind.is_adaptive() {
            vec![None]
        } else {
            cfg.epsilons()
        }
    };
    let mut plan = Vec::new();
    for &kind in &agents {
        for &scale in &cfg.bonus_scales {
            for eps in widths(kind) {
                for &seed in &cfg.seeds {
                    plan.push((kind, scale, eps, seed));
                }
            }
        }
    }
    let cells_dir = out.join("cells");
    let run =
        |&(kind, scale, eps, seed): &(AgentKind, f64, Option<f64>, u64)| -> Result<CellResult> {
            let path = cells_dir.join(format!(
                "{}.json",
                cell_name(kind.as_str(), scale, eps, seed)
            ));
            if path.exists() {
                return read_json(&path);
            }
            let cell = run_cell(cfg, env.as_ref(), &oracle, kind, scale, eps, seed)?;
            write_json(&path, &cell)?;
            log::info!("finished {}", cell.name());
            Ok(cell)
        };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| LabError::Config(format!("worker pool: {e}")))?;
    let results: Vec<CellResult> =
        pool.install(|| plan.par_iter().map(run).collect::<Result<Vec<_>>>())?;

    let mut csvs = Vec::new();
    let mut partitions = Vec::new();
    let mut groups = Vec::new();
    let mut best_scale = BTreeMap::new();
    let mut best_epsilon = BTreeMap::new();
    for &kind in &agents {
        let mut best: Option<(f64, Option<f64>, f64)> = None;
        for (&scale, eps) in cfg
            .bonus_scales
            .iter()
            .flat_map(|s| widths(kind).into_iter().map(move |e| (s, e)))
        {
            let cells: Vec<&CellResult> = results
                .iter()
                .filter(|c| {
                    c.agent == kind.as_str() && c.bonus_scale == scale && c.sweep_epsilon == eps
                })
                .collect();
            let group = group_name(kind.as_str(), scale, eps);
            let rows: Vec<EpisodeRow> = cells.iter().flat_map(|c| c.rows.iter().cloned()).collect();
            let csv = out.join(format!("{group}.csv"));
            write_csv(&csv, cfg.horizon, &rows)?;
            csvs.push(csv);
            for c in &cells {
                let p = out.join("partitions").join(format!("{}.json", c.name()));
                write_json(&p, &c.partition)?;
                partitions.push(p);
            }
            let summary = GroupSummary::from_cells(&cells);
            if best.is_none_or(|(_, _, r)| summary.cum_reward.mean > r) {
                best = Some((scale, summary.epsilon, summary.cum_reward.mean));
            }
            groups.push(summary);
        }
        if let Some((scale, eps, _)) = best {
            best_scale.insert(kind.to_string(), scale);
            if let Some(e) = eps {
                best_epsilon.insert(kind.to_string(), e);
            }
        }
    }
    let summary = Summary {
        env: env.name(),
        horizon: cfg.horizon,
        episodes: cfg.episodes,
        v_star_1,
        oracle_fingerprint: fp,
        groups,
        best_scale,
        best_epsilon,
    };
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary)?;
    Ok(RunSummary {
        out_dir: out,
        oracle: oracle_path,
        csvs,
        partitions,
        summary_path,
        summary,
    })
}

/// Echo of the configuration, for embedding in outputs.
pub fn config_echo(cfg: &ExperimentConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_interval() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        // sd = sqrt(5/3)
        assert!((s.ci - 1.96 * (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(Stat::of(&[7.0]).ci, 0.0);
    }
}
