use super::law::DiscreteLaw;
use crate::mat::{solve_linear, Mat};
use crate::scalar::{cast, Scalar};
use crate::{Error, Result};
use rand::Rng;

/// One stochastic transition branch of a state-action pair.
#[derive(Debug, Clone)]
pub struct Outcome<T> {
    pub next: usize,
    pub prob: T,
    pub reward: DiscreteLaw<T>,
}

/// Explicit finite MDP with per-transition discrete reward laws.
///
/// Reward laws attach to (s, a, s') branches so that rewards correlated with
/// the landed state (goal bonuses, fall penalties) stay exact in the
/// distributional backup; `from_state_action` covers the plain R(s,a) case.
#[derive(Debug, Clone)]
pub struct FiniteMdp<T> {
    n_states: usize,
    n_actions: usize,
    outcomes: Vec<Vec<Vec<Outcome<T>>>>,
    terminal: Vec<bool>,
    gamma: T,
}

impl<T: Scalar> FiniteMdp<T> {
    pub fn new(
        outcomes: Vec<Vec<Vec<Outcome<T>>>>,
        terminal: Vec<bool>,
        gamma: T,
    ) -> Result<Self> {
        let n_states = outcomes.len();
        if n_states == 0 || terminal.len() != n_states {
            return Err(Error::Config("state count mismatch".into()));
        }
        if !(T::zero()..T::one()).contains(&gamma) {
            return Err(Error::Config(format!("gamma must be in [0,1), got {gamma}")));
        }
        let n_actions = outcomes[0].len();
        for (s, per_action) in outcomes.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::Config(format!("state {s} has wrong action count")));
            }
            if terminal[s] {
                continue;
            }
            for (a, outs) in per_action.iter().enumerate() {
                let total: T = outs.iter().map(|o| o.prob).sum();
                if (total - T::one()).abs() > cast(1e-12) {
                    return Err(Error::Config(format!(
                        "P[{s}][{a}] sums to {total}, expected 1 within 1e-12"
                    )));
                }
                if outs.iter().any(|o| o.next >= n_states || o.prob < T::zero()) {
                    return Err(Error::Config(format!("P[{s}][{a}] has invalid outcome")));
                }
            }
        }
        Ok(FiniteMdp {
            n_states,
            n_actions,
            outcomes,
            terminal,
            gamma,
        })
    }

    /// Build from dense transition tensor P[s][a] and per-state-action reward
    /// laws R[s][a] (the reward law is replicated across landing states).
    pub fn from_state_action(
        transitions: Vec<Vec<Vec<T>>>,
        rewards: Vec<Vec<DiscreteLaw<T>>>,
        terminal: Vec<bool>,
        gamma: T,
    ) -> Result<Self> {
        let outcomes = transitions
            .iter()
            .enumerate()
            .map(|(s, per_a)| {
                per_a
                    .iter()
                    .enumerate()
                    .map(|(a, probs)| {
                        probs
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| **p > T::zero())
                            .map(|(next, &prob)| Outcome {
                                next,
                                prob,
                                reward: rewards[s][a].clone(),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        FiniteMdp::new(outcomes, terminal, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome<T>] {
        &self.outcomes[s][a]
    }

    /// Expected immediate reward of (s, a).
    pub fn mean_reward(&self, s: usize, a: usize) -> T {
        if self.terminal[s] {
            return T::zero();
        }
        self.outcomes[s][a]
            .iter()
            .map(|o| o.prob * o.reward.mean())
            .sum()
    }

    /// (min, max) reward atoms over all non-terminal state-action branches.
    pub fn reward_bounds(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for s in 0..self.n_states {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.n_actions {
                for o in &self.outcomes[s][a] {
                    lo = lo.min(o.reward.min_value());
                    hi = hi.max(o.reward.max_value());
                }
            }
        }
        if lo > hi {
            (T::zero(), T::zero())
        } else {
            (lo, hi)
        }
    }

    /// Conservative bounds on the discounted return, always including 0
    /// (the value of terminal states).
    pub fn return_bounds(&self) -> (T, T) {
        let (rlo, rhi) = self.reward_bounds();
        let denom = T::one() - self.gamma;
        ((rlo / denom).min(T::zero()), (rhi / denom).max(T::zero()))
    }

    /// Exact state values of a fixed policy via the linear system
    /// (I - gamma P_pi) v = r_pi; terminal states get value 0.
    pub fn policy_values(&self, policy: &TabularPolicy<T>) -> Result<Vec<T>> {
        let n = self.n_states;
        let mut a = Mat::zeros(n, n);
        let mut b = vec![T::zero(); n];
        for s in 0..n {
            if self.terminal[s] {
                a.set(s, s, T::one());
                continue;
            }
            a.set(s, s, T::one());
            for act in 0..self.n_actions {
                let pi = policy.prob(s, act);
                if pi == T::zero() {
                    continue;
                }
                b[s] += pi * self.mean_reward(s, act);
                for o in &self.outcomes[s][act] {
                    let cur = a.get(s, o.next);
                    a.set(s, o.next, cur - self.gamma * pi * o.prob);
                }
            }
        }
        solve_linear(&a, &b)
    }
}

/// Tabular stochastic policy: action probabilities per state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy<T> {
    probs: Vec<Vec<T>>,
}

impl<T: Scalar> TabularPolicy<T> {
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        if actions.iter().any(|&a| a >= n_actions) {
            return Err(Error::Contract("action index out of range".into()));
        }
        Ok(TabularPolicy {
            probs: actions
                .iter()
                .map(|&a| {
                    let mut row = vec![T::zero(); n_actions];
                    row[a] = T::one();
                    row
                })
                .collect(),
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = T::one() / cast::<T>(n_actions as f64);
        TabularPolicy {
            probs: vec![vec![p; n_actions]; n_states],
        }
    }

    pub fn from_probs(probs: Vec<Vec<T>>) -> Result<Self> {
        for (s, row) in probs.iter().enumerate() {
            let total: T = row.iter().copied().sum();
            if (total - T::one()).abs() > cast(1e-9) {
                return Err(Error::Contract(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(TabularPolicy { probs })
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[s][a]
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    /// Greedy action per state (argmax probability, lexicographic ties).
    pub fn greedy_actions(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|row| {
                let mut best = 0;
                for (a, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }

    pub fn sample_action<R: Rng>(&self, s: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen_range(0.0..1.0);
        let u = cast::<T>(u);
        let mut cum = T::zero();
        for (a, &p) in self.probs[s].iter().enumerate() {
            cum += p;
            if u < cum {
                return a;
            }
        }
        self.probs[s].len() - 1
    }
}

/// Howard policy iteration on expected values; exact, with lexicographic
/// tie-breaking. Returns (state values, deterministic policy).
pub fn policy_iteration<T: Scalar>(mdp: &FiniteMdp<T>) -> Result<(Vec<T>, Vec<usize>)> {
    let n = mdp.n_states();
    let mut actions = vec![0usize; n];
    let tol = cast::<T>(1e-11);
    for _ in 0..1000 {
        let policy = TabularPolicy::deterministic(&actions, mdp.n_actions())?;
        let values = mdp.policy_values(&policy)?;
        let mut changed = false;
        for s in 0..n {
            if mdp.is_terminal(s) {
                continue;
            }
            let mut best_a = 0usize;
            let mut best_q = T::neg_infinity();
            for a in 0..mdp.n_actions() {
                let q = mdp.mean_reward(s, a)
                    + mdp.gamma()
                        * mdp
                            .outcomes(s, a)
                            .iter()
                            .map(|o| o.prob * values[o.next])
                            .sum::<T>();
                if q > best_q + tol {
                    best_q = q;
                    best_a = a;
                }
            }
            if best_a != actions[s] {
                actions[s] = best_a;
                changed = true;
            }
        }
        if !changed {
            return Ok((values, actions));
        }
    }
    Err(Error::Numeric("policy iteration did not stabilize".into()))
}

/// Sample one episode's discounted return under a policy, stopping at
/// terminal states or after `max_steps`.
pub fn simulate_episode_return<T: Scalar, R: Rng>(
    mdp: &FiniteMdp<T>,
    policy: &TabularPolicy<T>,
    start: usize,
    max_steps: usize,
    rng: &mut R,
) -> T {
    let mut s = start;
    let mut ret = T::zero();
    let mut disc = T::one();
    for _ in 0..max_steps {
        if mdp.is_terminal(s) {
            break;
        }
        let a = policy.sample_action(s, rng);
        let outs = mdp.outcomes(s, a);
        let mut u = cast::<T>(rng.gen_range(0.0..1.0));
        let mut chosen = outs.len() - 1;
        for (k, o) in outs.iter().enumerate() {
            if u < o.prob {
                chosen = k;
                break;
            }
            u -= o.prob;
        }
        let o = &outs[chosen];
        // Sample the reward atom.
        let mut v = cast::<T>(rng.gen_range(0.0..1.0));
        let mut r = o.reward.atoms().last().unwrap().0;
        for &(val, p) in o.reward.atoms() {
            if v < p {
                r = val;
                break;
            }
            v -= p;
        }
        ret += disc * r;
        disc *= mdp.gamma();
        s = o.next;
    }
    ret
}
