use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Beta, Distribution, Uniform};

use super::{check_step, clip_unit, default_value_lipschitz, Environment, Lipschitz, Transition};
use crate::error::{Error, Result};
use crate::geometry::check_unit_point;

/// Per-step uniform arrival windows of the time-varying distribution.
const TIME_VARYING: [(f64, f64); 5] = [
    (0.0, 0.25),
    (0.25, 0.3),
    (0.3, 0.5),
    (0.5, 0.6),
    (0.6, 0.65),
];

/// Distribution `F_h` of the request location.
#[derive(Debug, Clone, PartialEq)]
pub enum Arrival {
    Beta {
        alpha: f64,
        beta: f64,
    },
    Uniform,
    /// `Uniform(lo_h, hi_h)` with a window per step `h = 1..=5`.
    TimeVarying,
}

impl Arrival {
    /// The `Beta(5, 2)` arrivals used in the benchmark runs.
    pub fn beta_5_2() -> Self {
        Arrival::Beta {
            alpha: 5.0,
            beta: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbulanceConfig {
    /// Number of ambulances `k`; states and actions are in `[0,1]^k`.
    pub fleet: usize,
    /// Trade-off between repositioning cost (`alpha`) and response cost.
    pub alpha: f64,
    pub arrival: Arrival,
    pub horizon: usize,
}

/// Ambulance routing on the unit interval.
#[derive(Debug, Clone)]
pub struct Ambulance {
    cfg: AmbulanceConfig,
    lipschitz: Lipschitz,
}

impl Ambulance {
    pub fn new(cfg: AmbulanceConfig) -> Result<Self> {
        if cfg.fleet == 0 {
            return Err(Error::Config(
                "ambulance: fleet size must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&cfg.alpha) {
            return Err(Error::Config("ambulance: alpha must lie in [0, 1]".into()));
        }
        if cfg.horizon == 0 {
            return Err(Error::Config("ambulance: horizon must be positive".into()));
        }
        match cfg.arrival {
            Arrival::Beta { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => {
                return Err(Error::Config(
                    "ambulance: Beta parameters must be positive".into(),
                ))
            }
            Arrival::TimeVarying if cfg.horizon > TIME_VARYING.len() => {
                return Err(Error::Config(
                    "ambulance: the time-varying arrivals are defined for horizons up to 5".into(),
                ))
            }
            _ => {}
        }
        let reward = 2.0 * cfg.alpha + (1.0 - cfg.alpha);
        let lipschitz = Lipschitz {
            reward,
            transition: 1.0,
            value: default_value_lipschitz(cfg.horizon, reward),
        };
        Ok(Self { cfg, lipschitz })
    }

    pub fn with_lipschitz(mut self, lipschitz: Lipschitz) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn config(&self) -> &AmbulanceConfig {
        &self.cfg
    }

    /// Draws a request location from `F_h`.
    pub fn sample_arrival(&self, h: usize, rng: &mut dyn RngCore) -> Result<f64> {
        check_step(h, self.cfg.horizon)?;
        let p = match self.cfg.arrival {
            Arrival::Beta { alpha, beta } => Beta::new(alpha, beta)
                .map_err(|e| Error::Config(alloc::format!("ambulance: {e}")))?
                .sample(rng),
            Arrival::Uniform => uniform(0.0, 1.0, rng)?,
            Arrival::TimeVarying => {
                let (lo, hi) = TIME_VARYING[h - 1];
                uniform(lo, hi, rng)?
            }
        };
        Ok(clip_unit(p))
    }

    /// Reward and next state for a realised request `p`.
    pub fn resolve(&self, x: &[f64], a: &[f64], p: f64) -> Transition {
        let k = self.cfg.fleet;
        let responder = a
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, &ai)| {
                let d = (ai - p).abs();
                if d < best.1 {
                    (i, d)
                } else {
                    best
                }
            });
        let travel: f64 = x.iter().zip(a).map(|(xi, ai)| (xi - ai).abs()).sum();
        let cost = self.cfg.alpha / k as f64 * travel + (1.0 - self.cfg.alpha) * responder.1;
        let mut next_state = a.to_vec();
        next_state[responder.0] = p;
        Transition {
            reward: clip_unit(1.0 - cost),
            next_state,
        }
    }
}

fn uniform(lo: f64, hi: f64, rng: &mut dyn RngCore) -> Result<f64> {
    Ok(Uniform::new_inclusive(lo, hi)
        .map_err(|e| Error::Config(alloc::format!("ambulance: {e}")))?
        .sample(rng))
}

impl Environment for Ambulance {
    fn name(&self) -> String {
        "ambulance".into()
    }

    fn state_dim(&self) -> usize {
        self.cfg.fleet
    }

    fn action_dim(&self) -> usize {
        self.cfg.fleet
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn lipschitz(&self) -> Lipschitz {
        self.lipschitz
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        alloc::vec![0.5; self.cfg.fleet]
    }

    fn step(&self, h: usize, x: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Result<Transition> {
        check_unit_point(x, self.cfg.fleet)?;
        check_unit_point(a, self.cfg.fleet)?;
        let p = self.sample_arrival(h, rng)?;
        Ok(self.resolve(x, a, p))
    }

    fn relocation_cost(&self, x: &[f64], a: &[f64]) -> Option<f64> {
        let travel: f64 = x.iter().zip(a).map(|(xi, ai)| (xi - ai).abs()).sum();
        Some(self.cfg.alpha / self.cfg.fleet as f64 * travel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(fleet: usize, alpha: f64, arrival: Arrival) -> Ambulance {
        Ambulance::new(AmbulanceConfig {
            fleet,
            alpha,
            arrival,
            horizon: 5,
        })
        .unwrap()
    }

    #[test]
    fn pure_travel_cost_ignores_the_request() {
        let amb = env(1, 1.0, Arrival::Uniform);
        let t = amb.resolve(&[0.2], &[0.5], 0.9);
        assert!((t.reward - 0.7).abs() < 1e-12);
        assert_eq!(t.next_state, [0.9]);
    }

    #[test]
    fn pure_response_cost() {
        let amb = env(1, 0.0, Arrival::Uniform);
        let t = amb.resolve(&[0.2], &[0.5], 0.6);
        assert!((t.reward - 0.9).abs() < 1e-12);
        assert_eq!(t.next_state, [0.6]);
    }

    #[test]
    fn nearest_ambulance_responds() {
        let amb = env(2, 0.5, Arrival::Uniform);
        let t = amb.resolve(&[0.3, 0.8], &[0.3, 0.8], 0.75);
        assert_eq!(t.next_state, [0.3, 0.75]);
        // equidistant: lowest index wins
        let t = amb.resolve(&[0.4, 0.6], &[0.4, 0.6], 0.5);
        assert_eq!(t.next_state, [0.5, 0.6]);
    }

    #[test]
    fn time_varying_windows() {
        let amb = env(1, 1.0, Arrival::TimeVarying);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = amb.sample_arrival(1, &mut rng).unwrap();
            assert!((0.0..=0.25).contains(&p));
            let p = amb.sample_arrival(5, &mut rng).unwrap();
            assert!((0.6..=0.65).contains(&p));
        }
        assert!(amb.sample_arrival(0, &mut rng).is_err());
        assert!(amb.sample_arrival(6, &mut rng).is_err());
    }

    #[test]
    fn beta_arrivals_have_the_right_mean() {
        let amb = env(1, 1.0, Arrival::beta_5_2());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| amb.sample_arrival(2, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 5.0 / 7.0).abs() < 0.01);
    }

    #[test]
    fn invalid_configs() {
        let base = AmbulanceConfig {
            fleet: 1,
            alpha: 0.5,
            arrival: Arrival::Uniform,
            horizon: 5,
        };
        assert!(Ambulance::new(AmbulanceConfig {
            fleet: 0,
            ..base.clone()
        })
        .is_err());
        assert!(Ambulance::new(AmbulanceConfig {
            alpha: 1.5,
            ..base.clone()
        })
        .is_err());
        assert!(Ambulance::new(AmbulanceConfig {
            arrival: Arrival::TimeVarying,
            horizon: 6,
            ..base
        })
        .is_err());
    }
}
