use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::RngCore;
use rand_distr::{Distribution, Normal};

use super::{check_step, clip_unit, default_value_lipschitz, Environment, Lipschitz, Transition};
use crate::error::{Error, Result};
use crate::geometry::check_unit_point;

/// Deposit locations of the sparse survey, one per step.
const SPARSE_CENTERS: [f64; 5] = [0.5, 0.25, 0.5, 0.75, 1.0];

/// Survey function `f_h(x)`: likelihood of finding oil at location `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Survey {
    /// `1 - lambda (x - c)^2`
    Quadratic { lambda: f64, center: f64 },
    /// `1 - exp(-lambda |x - c|)`
    Laplace { lambda: f64, center: f64 },
    /// `(1 / h)(1 - exp(-lambda |x - c_h|))` with `c_h` moving across steps.
    Sparse { lambda: f64 },
}

impl Survey {
    pub fn value(&self, h: usize, x: f64) -> Result<f64> {
        Ok(match *self {
            Survey::Quadratic { lambda, center } => 1.0 - lambda * (x - center).powi(2),
            Survey::Laplace { lambda, center } => 1.0 - (-lambda * (x - center).abs()).exp(),
            Survey::Sparse { lambda } => {
                let c = SPARSE_CENTERS.get(h.wrapping_sub(1)).ok_or_else(|| {
                    Error::Domain(alloc::format!(
                        "sparse survey defined for steps 1..=5, got {h}"
                    ))
                })?;
                (1.0 - (-lambda * (x - c).abs()).exp()) / h as f64
            }
        })
    }

    fn lipschitz(&self) -> f64 {
        match *self {
            Survey::Quadratic { lambda, center } => 2.0 * lambda * center.max(1.0 - center),
            Survey::Laplace { lambda, .. } | Survey::Sparse { lambda } => lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OilConfig {
    pub survey: Survey,
    /// Weight of the movement cost `alpha |x - a|`.
    pub alpha: f64,
    pub reward_noise_std: f64,
    /// Perturb the next state with `N(0, (0.025 (x + a)^2)^2)`.
    pub transition_noise: bool,
    pub horizon: usize,
}

impl OilConfig {
    pub fn quadratic(lambda: f64, center: f64, alpha: f64, horizon: usize) -> Self {
        Self {
            survey: Survey::Quadratic { lambda, center },
            alpha,
            reward_noise_std: 0.0,
            transition_noise: false,
            horizon,
        }
    }
}

/// One-dimensional oil discovery: move to a location, pay for the distance
/// travelled and collect the survey value at the current location.
#[derive(Debug, Clone)]
pub struct Oil {
    cfg: OilConfig,
    lipschitz: Lipschitz,
}

impl Oil {
    pub fn new(cfg: OilConfig) -> Result<Self> {
        if cfg.alpha.is_nan()
            || cfg.alpha < 0.0
            || cfg.reward_noise_std.is_nan()
            || cfg.reward_noise_std < 0.0
        {
            return Err(Error::Config(
                "oil: alpha and reward noise must be non-negative".into(),
            ));
        }
        if cfg.horizon == 0 {
            return Err(Error::Config("oil: horizon must be positive".into()));
        }
        if matches!(cfg.survey, Survey::Sparse { .. }) && cfg.horizon > SPARSE_CENTERS.len() {
            return Err(Error::Config(
                "oil: the sparse survey is defined for horizons up to 5".into(),
            ));
        }
        let reward = cfg.survey.lipschitz() + 2.0 * cfg.alpha;
        let lipschitz = Lipschitz {
            reward,
            transition: if cfg.transition_noise { 1.2 } else { 1.0 },
            value: default_value_lipschitz(cfg.horizon, reward),
        };
        Ok(Self { cfg, lipschitz })
    }

    pub fn with_lipschitz(mut self, lipschitz: Lipschitz) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn config(&self) -> &OilConfig {
        &self.cfg
    }

    /// Noise level `sigma_h(x, a)` of the transition.
    pub fn transition_std(&self, x: f64, a: f64) -> f64 {
        if self.cfg.transition_noise {
            0.025 * (x + a).powi(2)
        } else {
            0.0
        }
    }
}

impl Environment for Oil {
    fn name(&self) -> String {
        "oil".into()
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn lipschitz(&self) -> Lipschitz {
        self.lipschitz
    }

    fn is_deterministic(&self) -> bool {
        self.cfg.reward_noise_std == 0.0 && !self.cfg.transition_noise
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        alloc::vec![0.0]
    }

    fn step(&self, h: usize, x: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Result<Transition> {
        check_step(h, self.cfg.horizon)?;
        check_unit_point(x, 1)?;
        check_unit_point(a, 1)?;
        let (x, a) = (x[0], a[0]);
        let noise = if self.cfg.reward_noise_std > 0.0 {
            gaussian(self.cfg.reward_noise_std, rng)
        } else {
            0.0
        };
        let raw = self.cfg.survey.value(h, x)? - self.cfg.alpha * (x - a).abs() + noise;
        let sigma = self.transition_std(x, a);
        let next = if sigma > 0.0 {
            clip_unit(a + gaussian(sigma, rng))
        } else {
            a
        };
        Ok(Transition {
            reward: clip_unit(raw),
            next_state: alloc::vec![next],
        })
    }
}

fn gaussian(std: f64, rng: &mut dyn RngCore) -> f64 {
    // std > 0 is checked by the callers
    Normal::new(0.0, std).map_or(0.0, |n| n.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad() -> Oil {
        Oil::new(OilConfig::quadratic(1.0, 0.7, 1.0, 5)).unwrap()
    }

    #[test]
    fn noiseless_quadratic_examples() {
        let env = quad();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = env.step(1, &[0.7], &[0.7], &mut rng).unwrap();
        assert_eq!(t.reward, 1.0);
        assert_eq!(t.next_state, [0.7]);
        let t = env.step(1, &[0.2], &[0.7], &mut rng).unwrap();
        assert!((t.reward - 0.25).abs() < 1e-12);
        assert_eq!(t.next_state, [0.7]);
        assert!(env.is_deterministic());
    }

    #[test]
    fn reward_is_clipped_from_above() {
        // f = 1.3 at the deposit
        let env = Oil::new(OilConfig {
            survey: Survey::Quadratic {
                lambda: -0.3,
                center: 0.0,
            },
            ..OilConfig::quadratic(1.0, 0.0, 0.0, 1)
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = env.step(1, &[1.0], &[1.0], &mut rng).unwrap();
        assert_eq!(t.reward, 1.0);
    }

    #[test]
    fn sparse_survey_moves_with_the_step() {
        let s = Survey::Sparse { lambda: 10.0 };
        assert_eq!(s.value(2, 0.25).unwrap(), 0.0);
        assert!((s.value(1, 1.0).unwrap() - (1.0 - (-5.0f64).exp())).abs() < 1e-12);
        assert!(s.value(6, 0.5).is_err());
    }

    #[test]
    fn noisy_transitions_stay_in_the_unit_interval() {
        let env = Oil::new(OilConfig {
            survey: Survey::Sparse { lambda: 1.0 },
            alpha: 0.5,
            reward_noise_std: 0.3,
            transition_noise: true,
            horizon: 5,
        })
        .unwrap();
        assert!(!env.is_deterministic());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..500 {
            let x = (i % 11) as f64 / 10.0;
            let t = env.step(1 + i % 5, &[x], &[1.0 - x], &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&t.reward));
            assert!((0.0..=1.0).contains(&t.next_state[0]));
        }
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let env = quad();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(env.step(0, &[0.1], &[0.1], &mut rng).is_err());
        assert!(env.step(6, &[0.1], &[0.1], &mut rng).is_err());
        assert!(env.step(1, &[1.1], &[0.1], &mut rng).is_err());
    }
}
