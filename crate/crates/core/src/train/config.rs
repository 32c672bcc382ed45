use crate::env::{presets, EnvConfig};
use crate::nn::Activation;
use crate::{Error, Real, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Full training configuration. Serialized as TOML; every field has a
/// default so partial config files work.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub seed: u64,
    /// Discount factor.
    pub gamma: Real,
    /// GAE factor.
    pub lam: Real,
    /// PPO clipping range.
    pub clip: Real,
    /// Adam learning rate (both networks).
    pub lr: Real,
    pub entropy_coef: Real,
    /// CVaR level for the distorted policy objective (1 = risk-neutral).
    pub eta: Real,
    /// Quantile sample sizes N = N' per critic update.
    pub n_fractions: usize,
    /// Huber threshold of the quantile loss.
    pub kappa: Real,
    /// Fraction draws per CVaR value estimate during advantage computation.
    pub value_fractions: usize,
    pub n_envs: usize,
    pub rollout_steps: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub iterations: usize,
    /// Actor hidden sizes.
    pub actor_dims: Vec<usize>,
    /// Critic feature-network hidden sizes (last entry is the embedding
    /// dimension).
    pub critic_feature_dims: Vec<usize>,
    pub critic_n_basis: usize,
    pub critic_head_dims: Vec<usize>,
    pub activation: Activation,
    /// Initial Gaussian policy standard deviation (continuous actions).
    pub init_std: Real,
    pub normalize_advantages: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: presets::preset("pointmass").expect("builtin preset"),
            seed: 0,
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            lr: 1e-3,
            entropy_coef: 0.005,
            eta: 0.5,
            n_fractions: 64,
            kappa: 1.0,
            value_fractions: 32,
            n_envs: 16,
            rollout_steps: 256,
            epochs: 4,
            minibatch: 512,
            iterations: 300,
            actor_dims: vec![64, 64],
            critic_feature_dims: vec![64, 64],
            critic_n_basis: 64,
            critic_head_dims: vec![64],
            activation: Activation::Elu,
            init_std: 0.5,
            normalize_advantages: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0,1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return Err(Error::Config(format!("lam must be in [0,1], got {}", self.lam)));
        }
        if !(0.0..=1.0).contains(&self.eta) || self.eta == 0.0 {
            return Err(Error::Config(format!("eta must be in (0,1], got {}", self.eta)));
        }
        if self.clip <= 0.0 || self.lr <= 0.0 || self.kappa <= 0.0 || self.init_std <= 0.0 {
            return Err(Error::Config(
                "clip, lr, kappa, init_std must all be positive".into(),
            ));
        }
        for (name, v) in [
            ("n_fractions", self.n_fractions),
            ("value_fractions", self.value_fractions),
            ("n_envs", self.n_envs),
            ("rollout_steps", self.rollout_steps),
            ("epochs", self.epochs),
            ("minibatch", self.minibatch),
            ("env.horizon", self.env.horizon),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.actor_dims.is_empty() || self.critic_feature_dims.is_empty() {
            return Err(Error::Config("network dims must be nonempty".into()));
        }
        // Building the environment validates its own config block.
        self.env.build(0)?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Io(format!("config encode: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Training preset for a named environment, sized for minutes-scale CPU
    /// runs where the environment is small.
    pub fn preset(env_name: &str) -> Result<Self> {
        let mut cfg = TrainConfig {
            env: presets::preset(env_name)?,
            ..Default::default()
        };
        match env_name {
            "two-arm" => {
                cfg.gamma = 0.95;
                cfg.lam = 0.0;
                cfg.iterations = 100;
                cfg.n_envs = 8;
                cfg.rollout_steps = 64;
                cfg.minibatch = 256;
                cfg.epochs = 2;
                cfg.actor_dims = vec![32, 32];
                cfg.critic_feature_dims = vec![32, 32];
                cfg.critic_n_basis = 32;
                cfg.critic_head_dims = vec![32];
                cfg.n_fractions = 32;
                cfg.value_fractions = 64;
                cfg.entropy_coef = 0.05;
            }
            "cliff-oracle" => {
                cfg.gamma = presets::CLIFF_ORACLE_GAMMA;
                cfg.lam = 0.0;
                cfg.iterations = 150;
                cfg.n_envs = 16;
                cfg.rollout_steps = 64;
                cfg.minibatch = 256;
                cfg.epochs = 4;
                cfg.actor_dims = vec![32, 32];
                cfg.critic_feature_dims = vec![32, 32];
                cfg.critic_n_basis = 32;
                cfg.critic_head_dims = vec![32];
                cfg.n_fractions = 32;
                cfg.value_fractions = 32;
                cfg.entropy_coef = 0.01;
            }
            "pointmass" | "pointmass-gusty" | "racetrack" | "racetrack-safe"
            | "racetrack-hazard" => {
                cfg.iterations = 120;
                cfg.n_envs = 8;
                cfg.rollout_steps = 256;
                cfg.minibatch = 512;
                cfg.epochs = 3;
                cfg.actor_dims = vec![32, 32];
                cfg.critic_feature_dims = vec![32, 32];
                cfg.critic_n_basis = 32;
                cfg.critic_head_dims = vec![32];
                cfg.n_fractions = 32;
                cfg.value_fractions = 32;
            }
            _ => {}
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = TrainConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = TrainConfig::from_toml(&text).unwrap();
        assert_eq!(back.gamma, cfg.gamma);
        assert_eq!(back.n_fractions, cfg.n_fractions);
        assert_eq!(back.env.id, cfg.env.id);
    }

    #[test]
    fn partial_toml_falls_back_to_defaults() {
        let cfg = TrainConfig::from_toml("seed = 7\neta = 1.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.eta, 1.0);
        assert_eq!(cfg.gamma, 0.99);
        assert_eq!(cfg.clip, 0.2);
        assert_eq!(cfg.lam, 0.95);
        assert_eq!(cfg.lr, 1e-3);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(TrainConfig::from_toml("gamma = 1.5").is_err());
        assert!(TrainConfig::from_toml("eta = 0.0").is_err());
        assert!(TrainConfig::from_toml("clip = -0.1").is_err());
    }

    #[test]
    fn presets_validate() {
        for name in presets::preset_names() {
            TrainConfig::preset(name).unwrap().validate().unwrap();
        }
    }
}
