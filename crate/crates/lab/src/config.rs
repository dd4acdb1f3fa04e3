//! Experiment configuration: a JSON document plus `key=value` overrides on
//! dotted paths.

use std::path::{Path, PathBuf};

use adamb_core::agents::AgentKind;
use adamb_core::envs::{
    Ambulance, AmbulanceConfig, Arrival, Environment, Lipschitz, Oil, OilConfig, Survey,
};
use adamb_core::estimators::{BonusForm, BonusParams};
use adamb_core::oracle::OracleConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurveySpec {
    Quadratic { lambda: f64, center: f64 },
    Laplace { lambda: f64, center: f64 },
    Sparse { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSpec {
    Beta { alpha: f64, beta: f64 },
    Uniform,
    TimeVarying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Oil {
        survey: SurveySpec,
        alpha: f64,
        #[serde(default)]
        reward_noise_std: f64,
        #[serde(default)]
        transition_noise: bool,
    },
    Ambulance {
        #[serde(default = "one")]
        fleet: usize,
        alpha: f64,
        arrival: ArrivalSpec,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzSpec {
    pub reward: f64,
    pub transition: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Defaults to `resolution`.
    #[serde(default)]
    pub action_resolution: Option<usize>,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_resolution() -> usize {
    256
}

fn default_mc_draws() -> usize {
    200
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            action_resolution: None,
            mc_draws: default_mc_draws(),
            seed: 0,
        }
    }
}

impl OracleSpec {
    pub fn to_core(&self) -> OracleConfig {
        OracleConfig {
            resolution: self.resolution,
            action_resolution: self.action_resolution.unwrap_or(self.resolution),
            mc_draws: self.mc_draws,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusFormSpec {
    #[default]
    Theoretical,
    InverseSqrt,
}

/// One agent name or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: OneOrMany,
    pub horizon: usize,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_scales")]
    pub bonus_scales: Vec<f64>,
    #[serde(default)]
    pub bonus_form: BonusFormSpec,
    /// Grid width of the fixed-discretization baselines; a list sweeps it.
    #[serde(default)]
    pub epsilon: Option<EpsilonSpec>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c_wass")]
    pub c_wass: f64,
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub gamma: Option<u32>,
    #[serde(default)]
    pub lipschitz: Option<LipschitzSpec>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Record wall-clock time per episode; off gives byte-identical reruns.
    #[serde(default = "default_true")]
    pub timing: bool,
    /// Episodes between partition-size bound checks.
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
}

fn default_scales() -> Vec<f64> {
    vec![1.0]
}

fn default_delta() -> f64 {
    0.05
}

fn default_c_wass() -> f64 {
    1.0
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

fn default_checkpoint() -> usize {
    100
}

impl ExperimentConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: Self =
            serde_json::from_value(value).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| LabError::parse(path, e))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(LabError::Config(m.to_string()));
        if self.horizon == 0 {
            return fail("horizon must be at least 1");
        }
        if self.episodes == 0 {
            return fail("episodes must be at least 1");
        }
        if self.seeds.is_empty() {
            return fail("seeds must be nonempty");
        }
        if self.bonus_scales.is_empty() || self.bonus_scales.iter().any(|s| s.is_nan() || *s <= 0.0)
        {
            return fail("bonus_scales must be a nonempty list of positive numbers");
        }
        if self.checkpoint_every == 0 {
            return fail("checkpoint_every must be at least 1");
        }
        if self.oracle.resolution < 4 || !self.oracle.resolution.is_power_of_two() {
            return fail("oracle.resolution must be a power of two >= 4");
        }
        if self
            .epsilons()
            .iter()
            .flatten()
            .any(|e| !(*e > 0.0 && *e <= 1.0))
        {
            return fail("epsilon must lie in (0, 1]");
        }
        if self.epsilons().is_empty() {
            return fail("epsilon list is empty");
        }
        self.agents()?;
        self.build_env()?;
        Ok(())
    }

    /// Grid widths to sweep; `None` stands for the default width.
    pub fn epsilons(&self) -> Vec<Option<f64>> {
        match &self.epsilon {
            None => vec![None],
            Some(EpsilonSpec::One(e)) => vec![Some(*e)],
            Some(EpsilonSpec::Many(v)) => v.iter().copied().map(Some).collect(),
        }
    }

    pub fn agents(&self) -> Result<Vec<AgentKind>> {
        let names = match &self.agent {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        };
        if names.is_empty() {
            return Err(LabError::Config("agent list is empty".into()));
        }
        names
            .iter()
            .map(|n| {
                n.parse::<AgentKind>()
                    .map_err(|e| LabError::Config(e.to_string()))
            })
            .collect()
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        let lip = self.lipschitz.map(|l| Lipschitz {
            reward: l.reward,
            transition: l.transition,
            value: l.value,
        });
        let env: Box<dyn Environment> = match &self.env {
            EnvSpec::Oil {
                survey,
                alpha,
                reward_noise_std,
                transition_noise,
            } => {
                let survey = match *survey {
                    SurveySpec::Quadratic { lambda, center } => {
                        Survey::Quadratic { lambda, center }
                    }
                    SurveySpec::Laplace { lambda, center } => Survey::Laplace { lambda, center },
                    SurveySpec::Sparse { lambda } => Survey::Sparse { lambda },
                };
                let oil = Oil::new(OilConfig {
                    survey,
                    alpha: *alpha,
                    reward_noise_std: *reward_noise_std,
                    transition_noise: *transition_noise,
                    horizon: self.horizon,
                })?;
                Box::new(match lip {
                    Some(l) => oil.with_lipschitz(l),
                    None => oil,
                })
            }
            EnvSpec::Ambulance {
                fleet,
                alpha,
                arrival,
            } => {
                let arrival = match *arrival {
                    ArrivalSpec::Beta { alpha, beta } => Arrival::Beta { alpha, beta },
                    ArrivalSpec::Uniform => Arrival::Uniform,
                    ArrivalSpec::TimeVarying => Arrival::TimeVarying,
                };
                let amb = Ambulance::new(AmbulanceConfig {
                    fleet: *fleet,
                    alpha: *alpha,
                    arrival,
                    horizon: self.horizon,
                })?;
                Box::new(match lip {
                    Some(l) => amb.with_lipschitz(l),
                    None => amb,
                })
            }
        };
        Ok(env)
    }

    /// Agent constants for `env` at the given bonus scale.
    pub fn bonus_params(&self, env: &dyn Environment, bonus_scale: f64) -> BonusParams {
        let mut p = BonusParams::new(
            self.horizon,
            self.episodes,
            env.state_dim(),
            env.action_dim(),
            env.lipschitz(),
        );
        p.delta = self.delta;
        p.c_wass = self.c_wass;
        p.bonus_scale = bonus_scale;
        p.form = match self.bonus_form {
            BonusFormSpec::Theoretical => BonusForm::Theoretical,
            BonusFormSpec::InverseSqrt => BonusForm::InverseSqrt,
        };
        if let Some(phi) = self.phi {
            p.phi = phi;
        }
        if let Some(gamma) = self.gamma {
            p.gamma = gamma;
        }
        p
    }
}

/// Sets `key` (a dotted path) to `value`, parsed as JSON when possible and
/// as a plain string otherwise. Missing objects along the path are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(LabError::Config(format!(
                "override key `{key}` is malformed"
            )));
        }
        let obj = node.as_object_mut().ok_or_else(|| {
            LabError::Config(format!(
                "override `{key}`: `{part}` is not inside an object"
            ))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one part")
}
