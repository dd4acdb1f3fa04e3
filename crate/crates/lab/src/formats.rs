//! On-disk formats: per-episode CSV, partition dumps and cached oracles.

use std::fs;
use std::io::Write;
use std::path::Path;

use adamb_core::agents::{Agent, CellSnapshot};
use adamb_core::estimators::{partition_size_bound, BonusParams, Lipschitz};
use adamb_core::oracle::ValueOracle;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub partition_sizes: Vec<usize>,
    pub wall_ms: f64,
}

pub fn csv_header(horizon: usize) -> Vec<String> {
    let mut h: Vec<String> = ["seed", "episode", "reward", "regret", "cum_regret"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=horizon).map(|i| format!("partition_size_h{i}")));
    h.push("wall_ms".into());
    h
}

pub fn write_csv(path: &Path, horizon: usize, rows: &[EpisodeRow]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        let io = |e: csv::Error| LabError::parse(path, e);
        w.write_record(csv_header(horizon)).map_err(io)?;
        for r in rows {
            if r.partition_sizes.len() != horizon {
                return Err(LabError::parse(
                    path,
                    format!(
                        "row for episode {} has {} partition sizes",
                        r.episode,
                        r.partition_sizes.len()
                    ),
                ));
            }
            let mut rec = vec![
                r.seed.to_string(),
                r.episode.to_string(),
                r.reward.to_string(),
                r.regret.to_string(),
                r.cum_regret.to_string(),
            ];
            rec.extend(r.partition_sizes.iter().map(usize::to_string));
            rec.push(r.wall_ms.to_string());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| LabError::io(path, e))?;
    }
    write_atomic(path, &buf)
}

pub fn read_csv(path: &Path) -> Result<(usize, Vec<EpisodeRow>)> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| LabError::parse(path, e))?;
    let header = r.headers().map_err(|e| LabError::parse(path, e))?.clone();
    let horizon = header
        .len()
        .checked_sub(6)
        .filter(|&h| h > 0)
        .ok_or_else(|| LabError::parse(path, "header has too few columns"))?;
    let expected = csv_header(horizon);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(LabError::parse(path, "unexpected CSV header"));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| LabError::parse(path, e))?;
        let bad = |col: usize| {
            LabError::parse(
                path,
                format!("row {}: bad value in column {}", line + 2, expected[col]),
            )
        };
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(i));
        let u = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(i));
        rows.push(EpisodeRow {
            seed: rec[0].parse().map_err(|_| bad(0))?,
            episode: u(1)?,
            reward: f(2)?,
            regret: f(3)?,
            cum_regret: f(4)?,
            partition_sizes: (5..5 + horizon).map(u).collect::<Result<_>>()?,
            wall_ms: f(5 + horizon)?,
        });
    }
    Ok((horizon, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallDump {
    pub id: usize,
    pub level: u32,
    pub state_index: Vec<u64>,
    pub action_index: Vec<u64>,
    pub n: u64,
    pub q_hat: f64,
    pub status: String,
}

impl From<&CellSnapshot> for BallDump {
    fn from(c: &CellSnapshot) -> Self {
        Self {
            id: c.id,
            level: c.level,
            state_index: c.state_index.clone(),
            action_index: c.action_index.clone(),
            n: c.n,
            q_hat: c.q_hat,
            status: if c.active { "active" } else { "split" }.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDump {
    pub h: usize,
    pub balls: Vec<BallDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionDump {
    pub agent: String,
    pub bonus_scale: f64,
    pub seed: u64,
    pub episodes: usize,
    pub horizon: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub phi: f64,
    pub gamma: u32,
    pub steps: Vec<StepDump>,
    pub config: Value,
}

impl PartitionDump {
    #[allow(clippy::too_many_arguments)]
    pub fn capture(
        agent: &dyn Agent,
        bonus_scale: f64,
        seed: u64,
        episodes: usize,
        phi: f64,
        gamma: u32,
        config: Value,
    ) -> Result<Self> {
        let steps = (1..=agent.horizon())
            .map(|h| {
                Ok(StepDump {
                    h,
                    balls: agent.snapshot(h)?.iter().map(BallDump::from).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            agent: agent.kind().to_string(),
            bonus_scale,
            seed,
            episodes,
            horizon: agent.horizon(),
            state_dim: agent.state_dim(),
            action_dim: agent.action_dim(),
            phi,
            gamma,
            steps,
            config,
        })
    }

    pub fn active_counts(&self) -> Vec<usize> {
        self.steps
            .iter()
            .map(|s| s.balls.iter().filter(|b| b.status == "active").count())
            .collect()
    }

    fn active(&self, step: usize) -> impl Iterator<Item = &BallDump> {
        self.steps[step]
            .balls
            .iter()
            .filter(|b| b.status == "active")
    }

    /// Active balls per level at the given step (0-based), indexed by level.
    pub fn level_counts(&self, step: usize) -> Vec<usize> {
        let mut counts = Vec::new();
        for b in self.active(step) {
            let l = b.level as usize;
            if counts.len() <= l {
                counts.resize(l + 1, 0);
            }
            counts[l] += 1;
        }
        counts
    }

    /// Whether `sum 2^{-d l}` over the active balls of a step equals 1,
    /// computed in integers. `None` when the tree is too deep for `u128`.
    pub fn kraft_is_one(&self, step: usize) -> Option<bool> {
        let d = (self.state_dim + self.action_dim) as u32;
        let depth = self.active(step).map(|b| b.level).max().unwrap_or(0);
        let total = d.checked_mul(depth).filter(|&e| e < 127)?;
        let mut sum: u128 = 0;
        for b in self.active(step) {
            sum += 1u128 << (total - d * b.level);
        }
        Some(sum == 1u128 << total)
    }

    /// Transition entries `sum_h sum_B 2^{d_S l(B)}` over active balls.
    pub fn storage(&self) -> u128 {
        (0..self.steps.len())
            .flat_map(|h| self.active(h))
            .map(|b| 1u128 << (self.state_dim as u32 * b.level))
            .sum()
    }

    /// Worst-case partition size after `episodes` episodes.
    pub fn size_bound(&self) -> f64 {
        let mut p = BonusParams::new(
            self.horizon,
            self.episodes,
            self.state_dim,
            self.action_dim,
            Lipschitz {
                reward: 1.0,
                transition: 1.0,
                value: 1.0,
            },
        );
        p.phi = self.phi;
        p.gamma = self.gamma;
        partition_size_bound(self.episodes.max(1), &p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFile {
    pub fingerprint: String,
    pub resolution: usize,
    pub state_dim: usize,
    pub value_lipschitz: f64,
    pub values: Vec<Vec<f64>>,
}

impl OracleFile {
    pub fn new(fingerprint: String, oracle: &ValueOracle) -> Self {
        Self {
            fingerprint,
            resolution: oracle.resolution(),
            state_dim: oracle.state_dim(),
            value_lipschitz: oracle.value_lipschitz(),
            values: oracle.tables().to_vec(),
        }
    }

    pub fn into_oracle(self) -> Result<ValueOracle> {
        Ok(ValueOracle::from_tables(
            self.resolution,
            self.state_dim,
            self.value_lipschitz,
            self.values,
        )?)
    }
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn fingerprint(value: &Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| LabError::parse(path, e))?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| LabError::parse(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| LabError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| LabError::io(&tmp, e))?;
    f.sync_all().map_err(|e| LabError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| LabError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<EpisodeRow> {
        vec![
            EpisodeRow {
                seed: 3,
                episode: 1,
                reward: 0.1 + 0.2,
                regret: 1.0 / 3.0,
                cum_regret: 1.0 / 3.0,
                partition_sizes: vec![1, 4],
                wall_ms: 0.0,
            },
            EpisodeRow {
                seed: 3,
                episode: 2,
                reward: 1.75,
                regret: -1e-17,
                cum_regret: 0.3333333333333333,
                partition_sizes: vec![7, 4],
                wall_ms: 12.5,
            },
        ]
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_csv(&path, 2, &rows()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "seed,episode,reward,regret,cum_regret,partition_size_h1,partition_size_h2,wall_ms\n"
        ));
        assert!(!text.contains('\r'));
        assert_eq!(read_csv(&path).unwrap(), (2, rows()));
    }

    #[test]
    fn empty_csv_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_csv(&path, 1, &[]).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "seed,episode,reward,regret,cum_regret,partition_size_h1,wall_ms\n"
        );
        assert_eq!(read_csv(&path).unwrap(), (1, vec![]));
    }

    #[test]
    fn malformed_csv_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(
            &path,
            "seed,episode,reward,regret,cum_regret,partition_size_h1,wall_ms\n1,x,0,0,0,1,0\n",
        )
        .unwrap();
        assert!(read_csv(&path).is_err());
        fs::write(&path, "a,b\n").unwrap();
        assert!(read_csv(&path).is_err());
    }

    #[test]
    fn fresh_dump_is_one_root_per_step() {
        let params = BonusParams::new(
            2,
            10,
            1,
            1,
            Lipschitz {
                reward: 1.0,
                transition: 1.0,
                value: 3.0,
            },
        );
        let agent = adamb_core::agents::AdaMbAgent::new(params).unwrap();
        let dump = PartitionDump::capture(&agent, 1.0, 0, 0, 2.0, 3, Value::Null).unwrap();
        assert_eq!(dump.active_counts(), vec![1, 1]);
        assert_eq!(dump.level_counts(0), vec![1]);
        assert_eq!(dump.kraft_is_one(1), Some(true));
        assert_eq!(dump.storage(), 2);
        assert!(dump.size_bound() >= 1.0);
    }

    #[test]
    fn kraft_detects_gaps() {
        let ball = |id, level| BallDump {
            id,
            level,
            state_index: vec![0],
            action_index: vec![0],
            n: 0,
            q_hat: 1.0,
            status: "active".into(),
        };
        let mut dump = PartitionDump {
            agent: "adamb".into(),
            bonus_scale: 1.0,
            seed: 0,
            episodes: 1,
            horizon: 1,
            state_dim: 1,
            action_dim: 1,
            phi: 1.0,
            gamma: 3,
            steps: vec![StepDump {
                h: 1,
                balls: (1..5).map(|i| ball(i, 1)).collect(),
            }],
            config: Value::Null,
        };
        assert_eq!(dump.kraft_is_one(0), Some(true));
        assert_eq!(dump.storage(), 8);
        dump.steps[0].balls.pop();
        assert_eq!(dump.kraft_is_one(0), Some(false));
    }

    #[test]
    fn fingerprints_depend_on_content() {
        let a = fingerprint(&serde_json::json!({"x": 1}));
        assert_eq!(a.len(), 64);
        assert_ne!(a, fingerprint(&serde_json::json!({"x": 2})));
    }
}
