use super::{ActionSpec, Environment, StepInfo, StepResult};
use crate::FiniteMdp;
use crate::policy::Action;
use crate::{Error, Real, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Runs any [`FiniteMdp`] as an environment: one-hot observations, sampled
/// transitions and reward atoms. The bridge between the exact oracles and
/// the learning stack.
pub struct TabularEnv {
    mdp: FiniteMdp,
    start: usize,
    horizon: usize,
    rng: ChaCha8Rng,
    state: usize,
    steps: usize,
}

impl TabularEnv {
    pub fn new(mdp: FiniteMdp, start: usize, horizon: usize, seed: u64) -> Result<Self> {
        if start >= mdp.n_states() || mdp.is_terminal(start) {
            return Err(Error::Config(format!(
                "start state {start} must be non-terminal"
            )));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(TabularEnv {
            state: start,
            start,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mdp,
            steps: 0,
        })
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    fn one_hot(&self, s: usize) -> Vec<Real> {
        let mut v = vec![0.0; self.mdp.n_states()];
        v[s] = 1.0;
        v
    }
}

impl Environment for TabularEnv {
    fn obs_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete(self.mdp.n_actions())
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self) -> Vec<Real> {
        self.state = self.start;
        self.steps = 0;
        self.one_hot(self.state)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let a = action.as_discrete()?;
        if a >= self.mdp.n_actions() {
            return Err(Error::Contract(format!(
                "action {a} out of range 0..{}",
                self.mdp.n_actions()
            )));
        }
        let outs = self.mdp.outcomes(self.state, a);
        let mut u: Real = self.rng.gen_range(0.0..1.0);
        let mut chosen = outs.len() - 1;
        for (k, o) in outs.iter().enumerate() {
            if u < o.prob {
                chosen = k;
                break;
            }
            u -= o.prob;
        }
        let o = &outs[chosen];
        let mut v: Real = self.rng.gen_range(0.0..1.0);
        let mut reward = o.reward.atoms().last().unwrap().0;
        for &(val, p) in o.reward.atoms() {
            if v < p {
                reward = val;
                break;
            }
            v -= p;
        }
        self.state = o.next;
        self.steps += 1;
        let done = self.mdp.is_terminal(self.state) || self.steps >= self.horizon;
        let info = StepInfo {
            task_reward: reward,
            penalty: 0.0,
            risk_events: 0,
            segment: None,
            fell: false,
        };
        Ok(StepResult::compose(self.one_hot(self.state), reward, 0.0, done, info))
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::presets;
    use crate::oracle::{simulate_episode_return, TabularPolicy};

    #[test]
    fn episode_returns_match_mdp_simulation_in_mean() {
        let mdp = presets::two_arm_mdp();
        let pol = TabularPolicy::uniform(mdp.n_states(), mdp.n_actions());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let mut direct = 0.0;
        for _ in 0..n {
            direct += simulate_episode_return(&mdp, &pol, 0, 50, &mut rng);
        }
        direct /= n as Real;

        let mut env = TabularEnv::new(presets::two_arm_mdp(), 0, 50, 11).unwrap();
        let mut env_rng = ChaCha8Rng::seed_from_u64(4);
        let gamma = env.mdp().gamma();
        let mut total = 0.0;
        for _ in 0..n {
            env.reset();
            let mut disc = 1.0;
            loop {
                let a = Action::Discrete(env_rng.gen_range(0..2));
                let r = env.step(&a).unwrap();
                total += disc * r.reward;
                disc *= gamma;
                if r.done {
                    break;
                }
            }
        }
        let env_mean = total / n as Real;
        assert!(
            (direct - env_mean).abs() < 0.05,
            "direct {direct} vs env {env_mean}"
        );
    }
}
