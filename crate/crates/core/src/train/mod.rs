//! End-to-end orchestration: seeded rollout collection, PPO epochs with the
//! quantile-critic loss, checkpointing, metrics, and evaluation suites.

mod checkpoint;
mod config;
mod eval;
mod metrics;
mod rollout;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use eval::{compare, evaluate, run_episode, CompareRow, Controller, EpisodeStats, EvalReport};
pub use metrics::{export_metrics, read_records, summary_table, MetricsRecord};
pub use rollout::{collect_all, threads_from_env, EnvSlot, EpisodeLog};

use crate::critic::{
    bellman_targets, quantile_values_batch, sample_fractions, CriticConfig, CriticParams,
    Fractions,
};
use crate::env::ActionSpec;
use crate::nn::{Activation, Mlp};
use crate::optim::{adam_step, AdamConfig};
use crate::policy::{gae_from_values, ppo_clip_loss_on_tape, AdvantageBatch, PolicyParams};
use crate::risk::RiskLevel;
use crate::{AdamState, EmpiricalDistribution, Error, Mat, Real, Result, Tape};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Full training state.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub actor: PolicyParams,
    pub critic: CriticParams,
    target_critic: CriticParams,
    actor_opt: AdamState,
    critic_opt: AdamState,
    update_rng: ChaCha8Rng,
    slots: Vec<EnvSlot>,
    iteration: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let probe = cfg.env.build(cfg.seed)?;
        let obs_dim = probe.obs_dim();
        let action_spec = probe.action_spec();
        drop(probe);

        let actor = match action_spec {
            ActionSpec::Discrete(n) => {
                let mut dims = vec![obs_dim];
                dims.extend(&cfg.actor_dims);
                dims.push(n);
                PolicyParams::categorical(Mlp::new(
                    &dims,
                    cfg.activation,
                    Activation::Identity,
                    &mut init_rng,
                )?)
            }
            ActionSpec::Continuous { dim, .. } => {
                let mut dims = vec![obs_dim];
                dims.extend(&cfg.actor_dims);
                dims.push(dim);
                PolicyParams::gaussian(
                    Mlp::new(&dims, cfg.activation, Activation::Identity, &mut init_rng)?,
                    cfg.init_std,
                )?
            }
        };
        let critic = CriticParams::init(
            CriticConfig {
                obs_dim,
                feature_dims: cfg.critic_feature_dims.clone(),
                n_basis: cfg.critic_n_basis,
                head_dims: cfg.critic_head_dims.clone(),
                activation: cfg.activation,
            },
            &mut init_rng,
        )?;

        let actor_opt = AdamState::new(&actor.param_mats());
        let critic_opt = AdamState::new(&critic.param_mats());
        let slots = Self::make_slots(&cfg)?;

        Ok(Trainer {
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            update_rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed_0001)),
            slots,
            iteration: 0,
            cfg,
        })
    }

    fn make_slots(cfg: &TrainConfig) -> Result<Vec<EnvSlot>> {
        (0..cfg.n_envs)
            .map(|i| {
                let env = cfg.env.build(0)?;
                Ok(EnvSlot::new(
                    env,
                    cfg.seed
                        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)),
                    cfg.seed
                        .wrapping_add(0xc2b2_ae3d_27d4_eb4fu64.wrapping_mul(i as u64 + 1)),
                ))
            })
            .collect()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Shared fraction draw on [0, eta] for one advantage computation.
    fn value_fractions(&mut self) -> Result<Fractions> {
        let eta = self.cfg.eta;
        let n = self.cfg.value_fractions;
        let raw = sample_fractions(n, &mut self.update_rng)?;
        Fractions::new(raw.values().iter().map(|t| t * eta).collect())
    }

    /// CVaR-distorted state values under the current critic: the mean of
    /// quantile values at the shared fraction draw.
    fn values_for(&self, states: &[Vec<Real>], fractions: &Fractions) -> Result<Vec<Real>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let b = states.len();
        let dim = states[0].len();
        let mut flat = Vec::with_capacity(b * dim);
        for s in states {
            flat.extend_from_slice(s);
        }
        let m = Mat::from_vec(b, dim, flat)?;
        let q = quantile_values_batch(&m, fractions, &self.critic)?;
        Ok((0..b)
            .map(|i| q.row_slice(i).iter().sum::<Real>() / fractions.len() as Real)
            .collect())
    }

    /// One training iteration. Returns the metrics record.
    pub fn iterate(&mut self) -> Result<MetricsRecord> {
        // Target refresh at the top of every update epoch.
        self.target_critic = self.critic.clone();

        let (rollouts, log) = collect_all(
            &mut self.slots,
            &self.actor,
            self.cfg.rollout_steps,
            threads_from_env(),
        )?;

        // Advantages per slot (GAE must not telescope across slots), with a
        // fraction draw shared across the whole batch.
        let fr_v = self.value_fractions()?;
        let mut batch = AdvantageBatch {
            advantages: Vec::new(),
            returns: Vec::new(),
            old_log_probs: Vec::new(),
            normalized: false,
        };
        let mut all_states: Vec<Vec<Real>> = Vec::new();
        let mut all_actions = Vec::new();
        let mut all_rewards: Vec<Real> = Vec::new();
        let mut all_dones: Vec<bool> = Vec::new();
        let mut all_next: Vec<Vec<Real>> = Vec::new();
        for roll in &rollouts {
            let values = self.values_for(&roll.states, &fr_v)?;
            let next_values = self.values_for(&roll.next_states, &fr_v)?;
            let part = gae_from_values(
                &roll.rewards,
                &roll.dones,
                &values,
                &next_values,
                &roll.log_probs,
                self.cfg.gamma,
                self.cfg.lam,
            )?;
            batch.advantages.extend(part.advantages);
            batch.returns.extend(part.returns);
            batch.old_log_probs.extend(part.old_log_probs);
            all_states.extend(roll.states.iter().cloned());
            all_actions.extend(roll.actions.iter().cloned());
            all_rewards.extend(roll.rewards.iter().cloned());
            all_dones.extend(roll.dones.iter().cloned());
            all_next.extend(roll.next_states.iter().cloned());
        }
        if self.cfg.normalize_advantages {
            batch.normalize();
        }

        let n = all_states.len();
        let obs_dim = all_states[0].len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut policy_loss_acc = 0.0;
        let mut critic_loss_acc = 0.0;
        let mut entropy_acc = 0.0;
        let mut updates = 0usize;

        for _epoch in 0..self.cfg.epochs {
            // Fisher-Yates over the update stream keeps runs reproducible.
            for i in (1..n).rev() {
                let j = self.update_rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let mb = self.cfg.minibatch.min(n);
            for chunk in order.chunks(mb) {
                let (pl, ent) = self.actor_step(chunk, &all_states, &all_actions, &batch, obs_dim)?;
                let cl = self.critic_step(chunk, &all_states, &all_rewards, &all_dones, &all_next, obs_dim)?;
                policy_loss_acc += pl;
                critic_loss_acc += cl;
                entropy_acc += ent;
                updates += 1;
            }
        }
        self.iteration += 1;

        // Risk-signal statistic: critic IQR over a state subsample.
        let iqr_mean = self.batch_iqr(&all_states)?;

        let episodes = log.returns.len();
        let (mean_ret, cvar_ret) = if episodes > 0 {
            let dist = EmpiricalDistribution::from_samples(&log.returns)?;
            (dist.mean(), dist.cvar(RiskLevel::new(0.5)?))
        } else {
            (Real::NAN, Real::NAN)
        };
        Ok(MetricsRecord {
            iteration: self.iteration,
            episodes,
            mean_return: mean_ret,
            cvar_half_return: cvar_ret,
            risk_events_per_episode: if episodes > 0 {
                log.risk_events.iter().sum::<usize>() as Real / episodes as Real
            } else {
                Real::NAN
            },
            ttf: if episodes > 0 {
                log.lengths.iter().sum::<usize>() as Real
                    / episodes as Real
                    / self.cfg.env.horizon as Real
            } else {
                Real::NAN
            },
            critic_loss: critic_loss_acc / updates.max(1) as Real,
            policy_loss: policy_loss_acc / updates.max(1) as Real,
            entropy: entropy_acc / updates.max(1) as Real,
            iqr_mean,
        })
    }

    fn batch_iqr(&mut self, states: &[Vec<Real>]) -> Result<Real> {
        let take = states.len().min(64);
        if take == 0 {
            return Ok(0.0);
        }
        let stride = states.len() / take;
        let fr = crate::critic::fixed_fractions(32)?;
        let mut acc = 0.0;
        for i in 0..take {
            let q = crate::critic::quantile_values(&states[i * stride], &fr, &self.critic)?;
            acc += q.to_empirical()?.iqr();
        }
        Ok(acc / take as Real)
    }

    fn actor_step(
        &mut self,
        idx: &[usize],
        states: &[Vec<Real>],
        actions: &[crate::policy::Action],
        batch: &AdvantageBatch,
        obs_dim: usize,
    ) -> Result<(Real, Real)> {
        let b = idx.len();
        let mut flat = Vec::with_capacity(b * obs_dim);
        for &i in idx {
            flat.extend_from_slice(&states[i]);
        }
        let mb_states = Mat::from_vec(b, obs_dim, flat)?;
        let mb_actions: Vec<_> = idx.iter().map(|&i| actions[i].clone()).collect();
        let mb_batch = AdvantageBatch {
            advantages: idx.iter().map(|&i| batch.advantages[i]).collect(),
            returns: idx.iter().map(|&i| batch.returns[i]).collect(),
            old_log_probs: idx.iter().map(|&i| batch.old_log_probs[i]).collect(),
            normalized: batch.normalized,
        };

        let mut tape = Tape::new();
        let vars = self.actor.register(&mut tape);
        let lp = self
            .actor
            .log_probs_on_tape(&mut tape, mb_states.clone(), &mb_actions, &vars)?;
        let surrogate = ppo_clip_loss_on_tape(&mut tape, lp, &mb_batch, self.cfg.clip)?;
        let entropy = self.actor.entropy_on_tape(&mut tape, mb_states, &vars)?;
        let neg_bonus = tape.scale(entropy, -self.cfg.entropy_coef);
        let loss = tape.add(surrogate, neg_bonus)?;

        let loss_val = tape.value(loss).scalar()?;
        let entropy_val = tape.value(entropy).scalar()?;
        if !loss_val.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite actor loss at iteration {}",
                self.iteration
            )));
        }
        let grads = tape.backward(loss)?.param_grads(&tape);
        let mut mats = self.actor.param_mats_mut();
        let report = adam_step(
            &mut mats,
            &grads,
            &AdamConfig {
                lr: self.cfg.lr,
                ..AdamConfig::default()
            },
            &mut self.actor_opt,
        )?;
        if !report.applied {
            return Err(Error::Numeric(format!(
                "actor update rejected: {} non-finite gradient entries",
                report.non_finite
            )));
        }
        Ok((loss_val, entropy_val))
    }

    fn critic_step(
        &mut self,
        idx: &[usize],
        states: &[Vec<Real>],
        rewards: &[Real],
        dones: &[bool],
        next_states: &[Vec<Real>],
        obs_dim: usize,
    ) -> Result<Real> {
        let b = idx.len();
        let mut flat = Vec::with_capacity(b * obs_dim);
        let mut flat_next = Vec::with_capacity(b * obs_dim);
        for &i in idx {
            flat.extend_from_slice(&states[i]);
            flat_next.extend_from_slice(&next_states[i]);
        }
        let mb_states = Mat::from_vec(b, obs_dim, flat)?;
        let mb_next = Mat::from_vec(b, obs_dim, flat_next)?;
        let mb_rewards: Vec<Real> = idx.iter().map(|&i| rewards[i]).collect();
        let mb_dones: Vec<bool> = idx.iter().map(|&i| dones[i]).collect();

        // Fresh fraction draws per update batch.
        let fr_cur = sample_fractions(self.cfg.n_fractions, &mut self.update_rng)?;
        let fr_next = sample_fractions(self.cfg.n_fractions, &mut self.update_rng)?;
        let next_q = quantile_values_batch(&mb_next, &fr_next, &self.target_critic)?;
        let targets = bellman_targets(&mb_rewards, self.cfg.gamma, &mb_dones, &next_q)?;

        let mut tape = Tape::new();
        let vars = self.critic.register(&mut tape);
        let cur =
            crate::critic::quantile_values_on_tape(&mut tape, mb_states, &fr_cur, &self.critic, &vars)?;
        let deltas = tape.batch_td_deltas(cur, targets)?;
        let loss = tape.quantile_huber(deltas, fr_cur.values(), self.cfg.kappa, b)?;
        let loss_val = tape.value(loss).scalar()?;
        if !loss_val.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite critic loss at iteration {}",
                self.iteration
            )));
        }
        let grads = tape.backward(loss)?.param_grads(&tape);
        let mut mats = self.critic.param_mats_mut();
        let report = adam_step(
            &mut mats,
            &grads,
            &AdamConfig {
                lr: self.cfg.lr,
                ..AdamConfig::default()
            },
            &mut self.critic_opt,
        )?;
        if !report.applied {
            return Err(Error::Numeric(format!(
                "critic update rejected: {} non-finite gradient entries",
                report.non_finite
            )));
        }
        Ok(loss_val)
    }

    /// Snapshot of everything needed to reproduce evaluation bitwise.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::from_trainer(self)
    }

    pub(crate) fn parts(
        &self,
    ) -> (
        &TrainConfig,
        &PolicyParams,
        &CriticParams,
        &AdamState,
        &AdamState,
        &ChaCha8Rng,
        u64,
    ) {
        (
            &self.cfg,
            &self.actor,
            &self.critic,
            &self.actor_opt,
            &self.critic_opt,
            &self.update_rng,
            self.iteration,
        )
    }

    pub(crate) fn restore(
        cfg: TrainConfig,
        actor: PolicyParams,
        critic: CriticParams,
        actor_opt: AdamState,
        critic_opt: AdamState,
        update_rng: ChaCha8Rng,
        iteration: u64,
    ) -> Result<Self> {
        let slots = Self::make_slots(&cfg)?;
        Ok(Trainer {
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            update_rng,
            slots,
            iteration,
            cfg,
        })
    }
}

/// Train to completion. On a non-finite loss the partial state is saved to
/// `abort_path` (when given) before the error propagates.
pub fn train(
    cfg: TrainConfig,
    abort_path: Option<&std::path::Path>,
) -> Result<(Trainer, Vec<MetricsRecord>)> {
    let mut trainer = Trainer::new(cfg)?;
    let mut records = Vec::with_capacity(trainer.cfg.iterations);
    for _ in 0..trainer.cfg.iterations {
        match trainer.iterate() {
            Ok(rec) => records.push(rec),
            Err(e) => {
                if let Some(path) = abort_path {
                    trainer.checkpoint()?.save(path)?;
                }
                return Err(e);
            }
        }
    }
    Ok((trainer, records))
}
