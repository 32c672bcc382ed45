use crate::env::Environment;
use crate::policy::{PolicyParams, Rollout};
use crate::{Real, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One environment instance plus its private random streams and episode
/// accumulators. Slots step independently, so collection may run them on
/// separate threads; results reduce in slot order regardless.
pub struct EnvSlot {
    pub env: Box<dyn Environment>,
    act_rng: ChaCha8Rng,
    obs: Vec<Real>,
    episode_return: Real,
    episode_len: usize,
    episode_events: usize,
}

/// Completed-episode statistics gathered during collection.
#[derive(Debug, Clone, Default)]
pub struct EpisodeLog {
    pub returns: Vec<Real>,
    pub lengths: Vec<usize>,
    pub risk_events: Vec<usize>,
    pub fell: usize,
}

impl EnvSlot {
    pub fn new(mut env: Box<dyn Environment>, env_seed: u64, act_seed: u64) -> Self {
        env.reseed(env_seed);
        let obs = env.reset();
        EnvSlot {
            env,
            act_rng: ChaCha8Rng::seed_from_u64(act_seed),
            obs,
            episode_return: 0.0,
            episode_len: 0,
            episode_events: 0,
        }
    }

    /// Collect `steps` on-policy transitions, resetting at episode ends.
    pub fn collect(
        &mut self,
        policy: &PolicyParams,
        steps: usize,
        log: &mut EpisodeLog,
    ) -> Result<Rollout> {
        let mut out = Rollout::default();
        for _ in 0..steps {
            let state = self.obs.clone();
            let (action, log_prob) = policy.act(&state, &mut self.act_rng)?;
            let res = self.env.step(&action)?;
            self.episode_return += res.reward;
            self.episode_len += 1;
            self.episode_events += res.info.risk_events;

            out.states.push(state);
            out.actions.push(action);
            out.log_probs.push(log_prob);
            out.rewards.push(res.reward);
            out.dones.push(res.done);
            out.next_states.push(res.obs.clone());
            out.risk_events.push(res.info.risk_events);

            if res.done {
                log.returns.push(self.episode_return);
                log.lengths.push(self.episode_len);
                log.risk_events.push(self.episode_events);
                if res.info.fell {
                    log.fell += 1;
                }
                self.episode_return = 0.0;
                self.episode_len = 0;
                self.episode_events = 0;
                self.obs = self.env.reset();
            } else {
                self.obs = res.obs;
            }
        }
        Ok(out)
    }
}

/// Collection parallelism cap from the RISKGRAD_THREADS environment
/// variable (default 1).
pub fn threads_from_env() -> usize {
    std::env::var("RISKGRAD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1)
        .max(1)
}

/// Collect from every slot, optionally on multiple threads. Per-slot random
/// streams make the result identical whatever the thread count; reduction
/// is by slot index.
pub fn collect_all(
    slots: &mut [EnvSlot],
    policy: &PolicyParams,
    steps: usize,
    threads: usize,
) -> Result<(Vec<Rollout>, EpisodeLog)> {
    let threads = threads.max(1);

    let mut rollouts: Vec<Option<Rollout>> = (0..slots.len()).map(|_| None).collect();
    let mut logs: Vec<EpisodeLog> = (0..slots.len()).map(|_| EpisodeLog::default()).collect();

    if threads <= 1 || slots.len() <= 1 {
        for (i, slot) in slots.iter_mut().enumerate() {
            rollouts[i] = Some(slot.collect(policy, steps, &mut logs[i])?);
        }
    } else {
        let chunk = slots.len().div_ceil(threads);
        std::thread::scope(|scope| -> Result<()> {
            let mut handles = Vec::new();
            for ((slot_chunk, roll_chunk), log_chunk) in slots
                .chunks_mut(chunk)
                .zip(rollouts.chunks_mut(chunk))
                .zip(logs.chunks_mut(chunk))
            {
                handles.push(scope.spawn(move || -> Result<()> {
                    for ((slot, roll), log) in slot_chunk
                        .iter_mut()
                        .zip(roll_chunk.iter_mut())
                        .zip(log_chunk.iter_mut())
                    {
                        *roll = Some(slot.collect(policy, steps, log)?);
                    }
                    Ok(())
                }));
            }
            for h in handles {
                h.join().expect("collection thread panicked")?;
            }
            Ok(())
        })?;
    }

    let mut merged_log = EpisodeLog::default();
    for log in logs {
        merged_log.returns.extend(log.returns);
        merged_log.lengths.extend(log.lengths);
        merged_log.risk_events.extend(log.risk_events);
        merged_log.fell += log.fell;
    }
    Ok((rollouts.into_iter().map(|r| r.unwrap()).collect(), merged_log))
}
