//! Desk-scale stochastic environments with Bernoulli risk-injected rewards:
//! a risky-cliff gridworld, a velocity-tracking point mass, a mixed
//! safe/hazard race track, and a generic finite-MDP wrapper.

mod cliff;
mod pointmass;
pub mod presets;
mod tabular;

pub use cliff::{CliffConfig, CliffEnv};
pub use pointmass::{PointmassConfig, PointmassEnv, TrackConfig};
pub use tabular::TabularEnv;

use crate::policy::Action;
use crate::{Error, Real, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Action-space description.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpec {
    Discrete(usize),
    /// Symmetric box: each of `dim` components clamped to [-limit, limit].
    Continuous { dim: usize, limit: Real },
}

/// One Bernoulli-gated penalty term: fires weight w when the monitored
/// scalar exceeds its threshold in absolute value, with probability p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    /// Index into the environment's monitored-scalar vector.
    pub index: usize,
    pub threshold: Real,
    pub weight: Real,
    pub p: Real,
}

impl RiskSpec {
    pub fn validate(&self, n_scalars: usize) -> Result<()> {
        if self.index >= n_scalars {
            return Err(Error::Config(format!(
                "risk spec monitors scalar {} but the environment exposes {n_scalars}",
                self.index
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("risk p must be in [0,1], got {}", self.p)));
        }
        if self.weight < 0.0 {
            return Err(Error::Config(format!(
                "risk weight must be >= 0, got {}",
                self.weight
            )));
        }
        Ok(())
    }
}

/// Penalty and event count of the risk terms at one step: for each spec,
/// weight * 1{|s_i| > threshold} * Bernoulli(p), drawn independently per
/// active term. Indices must be pre-validated.
pub fn risk_penalty<R: Rng>(
    scalars: &[Real],
    specs: &[RiskSpec],
    p_scale: Real,
    rng: &mut R,
) -> (Real, usize) {
    let mut penalty = 0.0;
    let mut events = 0;
    for spec in specs {
        if scalars[spec.index].abs() > spec.threshold {
            let p = (spec.p * p_scale).clamp(0.0, 1.0);
            if p > 0.0 && rng.gen_range(0.0..1.0) < p {
                penalty += spec.weight;
                events += 1;
            }
        }
    }
    (penalty, events)
}

/// Per-step bookkeeping exposed alongside the reward.
#[derive(Debug, Clone, Default)]
pub struct StepInfo {
    pub task_reward: Real,
    pub penalty: Real,
    pub risk_events: usize,
    /// Track segment at this step (race track only; evaluation metadata,
    /// never part of the observation).
    pub segment: Option<usize>,
    /// Early termination from instability (speed blow-up analog of a fall).
    pub fell: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Vec<Real>,
    pub reward: Real,
    pub done: bool,
    pub info: StepInfo,
}

impl StepResult {
    fn compose(obs: Vec<Real>, task: Real, penalty: Real, done: bool, info: StepInfo) -> Self {
        StepResult {
            obs,
            reward: task - penalty,
            done,
            info,
        }
    }
}

/// A seeded, independently steppable environment instance.
pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn action_spec(&self) -> ActionSpec;
    fn horizon(&self) -> usize;
    /// Start a fresh episode and return the initial observation.
    fn reset(&mut self) -> Vec<Real>;
    fn step(&mut self, action: &Action) -> Result<StepResult>;
    /// Replace the instance's random stream.
    fn reseed(&mut self, seed: u64);
}

/// Serializable environment selection: an id plus the matching config block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub id: String,
    pub horizon: usize,
    #[serde(default)]
    pub cliff: Option<CliffConfig>,
    #[serde(default)]
    pub pointmass: Option<PointmassConfig>,
}

impl EnvConfig {
    /// Instantiate the configured environment with the given seed.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Environment>> {
        match self.id.as_str() {
            "cliff" => {
                let cfg = self
                    .cliff
                    .clone()
                    .ok_or_else(|| Error::Config("cliff config block missing".into()))?;
                Ok(Box::new(CliffEnv::new(cfg, self.horizon, seed)?))
            }
            "pointmass" | "racetrack" => {
                let cfg = self
                    .pointmass
                    .clone()
                    .ok_or_else(|| Error::Config("pointmass config block missing".into()))?;
                Ok(Box::new(PointmassEnv::new(cfg, self.horizon, seed)?))
            }
            "two-arm" => Ok(Box::new(TabularEnv::new(
                presets::two_arm_mdp(),
                0,
                self.horizon,
                seed,
            )?)),
            other => Err(Error::Config(format!("unknown environment id '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn risk_penalty_inactive_below_threshold() {
        let specs = vec![RiskSpec {
            index: 0,
            threshold: 2.0,
            weight: 100.0,
            p: 1.0,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (pen, ev) = risk_penalty(&[1.5], &specs, 1.0, &mut rng);
        assert_eq!(pen, 0.0);
        assert_eq!(ev, 0);
    }

    #[test]
    fn risk_penalty_p_zero_never_fires() {
        let specs = vec![RiskSpec {
            index: 0,
            threshold: 0.5,
            weight: 100.0,
            p: 0.0,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (pen, _) = risk_penalty(&[10.0], &specs, 1.0, &mut rng);
            assert_eq!(pen, 0.0);
        }
    }

    #[test]
    fn risk_penalty_certain_fire_full_weight() {
        let specs = vec![RiskSpec {
            index: 0,
            threshold: 0.5,
            weight: 100.0,
            p: 1.0,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (pen, ev) = risk_penalty(&[1.0], &specs, 1.0, &mut rng);
        assert_eq!(pen, 100.0);
        assert_eq!(ev, 1);
    }

    #[test]
    fn risk_penalty_expectation_matches_w_times_p() {
        // E[penalty | indicator active] = w * p within 3 standard errors.
        let (w, p) = (100.0, 0.01);
        let specs = vec![RiskSpec {
            index: 0,
            threshold: 0.5,
            weight: w,
            p,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += risk_penalty(&[1.0], &specs, 1.0, &mut rng).0;
        }
        let mean = acc / n as Real;
        let se = (w * w * p * (1.0 - p) / n as Real).sqrt();
        assert!(
            (mean - w * p).abs() < 3.0 * se,
            "mean {mean} vs {} (3se {})",
            w * p,
            3.0 * se
        );
    }

    #[test]
    fn risk_spec_validation() {
        let bad_idx = RiskSpec {
            index: 3,
            threshold: 1.0,
            weight: 1.0,
            p: 0.5,
        };
        assert!(bad_idx.validate(2).is_err());
        let bad_p = RiskSpec {
            index: 0,
            threshold: 1.0,
            weight: 1.0,
            p: 1.5,
        };
        assert!(bad_p.validate(2).is_err());
    }
}
