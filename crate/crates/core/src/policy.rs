//! Stochastic policies, GAE advantages over (possibly CVaR-distorted)
//! values, and the clipped surrogate policy-gradient loss.

use crate::nn::{Mlp, MlpVars};
use crate::tape::VarId;
use crate::{Error, Mat, Real, Result, Tape};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

const LN_2PI: Real = 1.8378770664093453;

/// Environment action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<Real>),
}

impl Action {
    pub fn as_discrete(&self) -> Result<usize> {
        match self {
            Action::Discrete(a) => Ok(*a),
            _ => Err(Error::Contract("expected a discrete action".into())),
        }
    }

    pub fn as_continuous(&self) -> Result<&[Real]> {
        match self {
            Action::Continuous(a) => Ok(a),
            _ => Err(Error::Contract("expected a continuous action".into())),
        }
    }
}

/// Diagonal Gaussian policy: mean network plus a state-independent
/// log-std vector, one entry per action dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianPolicyParams {
    pub mean: Mlp<Real>,
    pub log_std: Mat,
}

/// Categorical policy over a discrete action set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalPolicyParams {
    pub logits: Mlp<Real>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PolicyParams {
    Gaussian(GaussianPolicyParams),
    Categorical(CategoricalPolicyParams),
}

impl PolicyParams {
    pub fn gaussian(mean: Mlp<Real>, init_std: Real) -> Result<Self> {
        if init_std <= 0.0 {
            return Err(Error::Config(format!("init_std must be > 0, got {init_std}")));
        }
        let k = mean.output_dim();
        let log_std = Mat::filled(1, k, init_std.ln());
        Ok(PolicyParams::Gaussian(GaussianPolicyParams { mean, log_std }))
    }

    pub fn categorical(logits: Mlp<Real>) -> Self {
        PolicyParams::Categorical(CategoricalPolicyParams { logits })
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            PolicyParams::Gaussian(g) => g.mean.input_dim(),
            PolicyParams::Categorical(c) => c.logits.input_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            PolicyParams::Gaussian(g) => g.mean.output_dim(),
            PolicyParams::Categorical(c) => c.logits.output_dim(),
        }
    }

    pub fn param_mats(&self) -> Vec<&Mat> {
        match self {
            PolicyParams::Gaussian(g) => {
                let mut v = g.mean.param_mats();
                v.push(&g.log_std);
                v
            }
            PolicyParams::Categorical(c) => c.logits.param_mats(),
        }
    }

    pub fn param_mats_mut(&mut self) -> Vec<&mut Mat> {
        match self {
            PolicyParams::Gaussian(g) => {
                let mut v = g.mean.param_mats_mut();
                v.push(&mut g.log_std);
                v
            }
            PolicyParams::Categorical(c) => c.logits.param_mats_mut(),
        }
    }

    pub fn register(&self, tape: &mut Tape) -> PolicyVars {
        match self {
            PolicyParams::Gaussian(g) => {
                let net = g.mean.register(tape);
                let log_std = tape.param(g.log_std.clone());
                PolicyVars {
                    net,
                    log_std: Some(log_std),
                }
            }
            PolicyParams::Categorical(c) => PolicyVars {
                net: c.logits.register(tape),
                log_std: None,
            },
        }
    }

    /// Sample an action and its exact log density/mass.
    pub fn act<R: Rng>(&self, state: &[Real], rng: &mut R) -> Result<(Action, Real)> {
        let x = Mat::from_vec(1, state.len(), state.to_vec())?;
        match self {
            PolicyParams::Gaussian(g) => {
                let mu = g.mean.forward(&x)?;
                let k = mu.cols();
                let mut a = Vec::with_capacity(k);
                for i in 0..k {
                    let eps: Real = StandardNormal.sample(rng);
                    a.push(mu.get(0, i) + g.log_std.get(0, i).exp() * eps);
                }
                let lp = gaussian_log_prob(&mu, &g.log_std, &a);
                Ok((Action::Continuous(a), lp))
            }
            PolicyParams::Categorical(c) => {
                let logits = c.logits.forward(&x)?;
                let lp_all = log_softmax_row(logits.row_slice(0));
                let u: Real = rng.gen_range(0.0..1.0);
                let mut cum = 0.0;
                let mut chosen = lp_all.len() - 1;
                for (i, lp) in lp_all.iter().enumerate() {
                    cum += lp.exp();
                    if u < cum {
                        chosen = i;
                        break;
                    }
                }
                Ok((Action::Discrete(chosen), lp_all[chosen]))
            }
        }
    }

    /// Deterministic action: the Gaussian mean, or the argmax class.
    pub fn act_greedy(&self, state: &[Real]) -> Result<Action> {
        let x = Mat::from_vec(1, state.len(), state.to_vec())?;
        match self {
            PolicyParams::Gaussian(g) => Ok(Action::Continuous(
                g.mean.forward(&x)?.row_slice(0).to_vec(),
            )),
            PolicyParams::Categorical(c) => {
                let logits = c.logits.forward(&x)?;
                let row = logits.row_slice(0);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                Ok(Action::Discrete(best))
            }
        }
    }

    /// Exact log probability of an action at a state.
    pub fn log_prob(&self, state: &[Real], action: &Action) -> Result<Real> {
        let x = Mat::from_vec(1, state.len(), state.to_vec())?;
        match (self, action) {
            (PolicyParams::Gaussian(g), Action::Continuous(a)) => {
                let mu = g.mean.forward(&x)?;
                Ok(gaussian_log_prob(&mu, &g.log_std, a))
            }
            (PolicyParams::Categorical(c), Action::Discrete(a)) => {
                let logits = c.logits.forward(&x)?;
                Ok(log_softmax_row(logits.row_slice(0))[*a])
            }
            _ => Err(Error::Contract("action kind does not match policy".into())),
        }
    }

    /// Log probabilities of a batch of stored actions, on tape (Bx1 node).
    pub fn log_probs_on_tape(
        &self,
        tape: &mut Tape,
        states: Mat,
        actions: &[Action],
        vars: &PolicyVars,
    ) -> Result<VarId> {
        let b = states.rows();
        if actions.len() != b {
            return Err(Error::Shape(format!(
                "{} actions for {b} states",
                actions.len()
            )));
        }
        let x = tape.leaf(states);
        match self {
            PolicyParams::Gaussian(g) => {
                let log_std = vars
                    .log_std
                    .ok_or_else(|| Error::Contract("gaussian vars missing log_std".into()))?;
                let mu = g.mean.forward_on_tape(tape, x, &vars.net)?;
                let k = g.mean.output_dim();
                let mut a = Mat::zeros(b, k);
                for (bi, act) in actions.iter().enumerate() {
                    for (i, &v) in act.as_continuous()?.iter().enumerate() {
                        a.set(bi, i, v);
                    }
                }
                let diff = tape.sub_from_const(a, mu)?; // a - mu
                let neg_ls = tape.scale(log_std, -1.0);
                let inv_sigma = tape.exp(neg_ls);
                let z = tape.mul_row_vec(diff, inv_sigma)?;
                let z2 = tape.mul_elem(z, z)?;
                let ssq = tape.sum_rows(z2);
                let half = tape.scale(ssq, -0.5);
                let sum_ls = tape.sum(log_std);
                let neg_sum_ls = tape.scale(sum_ls, -1.0);
                let with_ls = tape.add_scalar_node(half, neg_sum_ls)?;
                Ok(tape.add_scalar(with_ls, -0.5 * k as Real * LN_2PI))
            }
            PolicyParams::Categorical(c) => {
                let logits = c.logits.forward_on_tape(tape, x, &vars.net)?;
                let ls = tape.log_softmax_rows(logits);
                let idx: Vec<usize> = actions
                    .iter()
                    .map(|a| a.as_discrete())
                    .collect::<Result<_>>()?;
                tape.pick_per_row(ls, &idx)
            }
        }
    }

    /// Mean policy entropy over a batch of states, on tape (1x1 node).
    pub fn entropy_on_tape(&self, tape: &mut Tape, states: Mat, vars: &PolicyVars) -> Result<VarId> {
        match self {
            PolicyParams::Gaussian(g) => {
                let log_std = vars
                    .log_std
                    .ok_or_else(|| Error::Contract("gaussian vars missing log_std".into()))?;
                let k = g.mean.output_dim() as Real;
                let s = tape.sum(log_std);
                Ok(tape.add_scalar(s, 0.5 * k * (LN_2PI + 1.0)))
            }
            PolicyParams::Categorical(c) => {
                let x = tape.leaf(states);
                let logits = c.logits.forward_on_tape(tape, x, &vars.net)?;
                let ls = tape.log_softmax_rows(logits);
                let p = tape.exp(ls);
                let plogp = tape.mul_elem(p, ls)?;
                let rows = tape.sum_rows(plogp);
                let m = tape.mean(rows);
                Ok(tape.scale(m, -1.0))
            }
        }
    }

    /// Mean policy entropy over states (no tape).
    pub fn entropy_bonus(&self, states: &[Vec<Real>]) -> Result<Real> {
        match self {
            PolicyParams::Gaussian(g) => {
                let k = g.mean.output_dim() as Real;
                Ok(g.log_std.sum() + 0.5 * k * (LN_2PI + 1.0))
            }
            PolicyParams::Categorical(c) => {
                let mut acc = 0.0;
                for s in states {
                    let x = Mat::from_vec(1, s.len(), s.clone())?;
                    let lp = log_softmax_row(c.logits.forward(&x)?.row_slice(0));
                    acc -= lp.iter().map(|l| l.exp() * l).sum::<Real>();
                }
                Ok(acc / states.len().max(1) as Real)
            }
        }
    }
}

pub struct PolicyVars {
    pub net: MlpVars,
    pub log_std: Option<VarId>,
}

fn gaussian_log_prob(mu: &Mat, log_std: &Mat, action: &[Real]) -> Real {
    let k = mu.cols();
    let mut lp = -0.5 * k as Real * LN_2PI;
    for i in 0..k {
        let ls = log_std.get(0, i);
        let z = (action[i] - mu.get(0, i)) * (-ls).exp();
        lp -= ls + 0.5 * z * z;
    }
    lp
}

fn log_softmax_row(row: &[Real]) -> Vec<Real> {
    let mx = row.iter().fold(Real::NEG_INFINITY, |m, &v| m.max(v));
    let lse = row.iter().map(|&v| (v - mx).exp()).sum::<Real>().ln() + mx;
    row.iter().map(|&v| v - lse).collect()
}

/// One collected on-policy segment (possibly spanning episode resets).
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub states: Vec<Vec<Real>>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<Real>,
    pub rewards: Vec<Real>,
    pub dones: Vec<bool>,
    /// Observed successor of each step, before any reset.
    pub next_states: Vec<Vec<Real>>,
    /// Risk events fired at each step (metrics only).
    pub risk_events: Vec<usize>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Per-timestep advantages with their return targets and the behavior
/// policy's log-probs.
#[derive(Debug, Clone)]
pub struct AdvantageBatch {
    pub advantages: Vec<Real>,
    pub returns: Vec<Real>,
    pub old_log_probs: Vec<Real>,
    pub normalized: bool,
}

impl AdvantageBatch {
    /// Normalize advantages to zero mean, unit standard deviation.
    pub fn normalize(&mut self) {
        let n = self.advantages.len() as Real;
        let mean = self.advantages.iter().sum::<Real>() / n;
        let var = self
            .advantages
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<Real>()
            / n;
        let std = var.sqrt().max(1e-8);
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
        self.normalized = true;
    }
}

/// Generalized advantage estimation from precomputed state values:
/// A_t = sum_l (gamma*lambda)^l delta_{t+l}, stopped at episode boundaries;
/// return target = A_t + V(s_t).
pub fn gae_from_values(
    rewards: &[Real],
    dones: &[bool],
    values: &[Real],
    next_values: &[Real],
    old_log_probs: &[Real],
    gamma: Real,
    lam: Real,
) -> Result<AdvantageBatch> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::Contract("empty rollout".into()));
    }
    if dones.len() != n || values.len() != n || next_values.len() != n || old_log_probs.len() != n {
        return Err(Error::Shape("gae: field lengths differ".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Contract(format!("gamma must be in [0,1), got {gamma}")));
    }
    if !(0.0..=1.0).contains(&lam) {
        return Err(Error::Contract(format!("lambda must be in [0,1], got {lam}")));
    }
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * cont * next_values[t] - values[t];
        acc = delta + gamma * lam * cont * acc;
        advantages[t] = acc;
    }
    let returns = advantages
        .iter()
        .zip(values.iter())
        .map(|(a, v)| a + v)
        .collect();
    Ok(AdvantageBatch {
        advantages,
        returns,
        old_log_probs: old_log_probs.to_vec(),
        normalized: false,
    })
}

/// GAE over a rollout with an arbitrary state-value function (the mean value
/// at eta = 1, or a CVaR-distorted value at eta < 1).
pub fn gae_advantages<F>(
    rollout: &Rollout,
    value_fn: F,
    gamma: Real,
    lam: Real,
) -> Result<AdvantageBatch>
where
    F: Fn(&[Real]) -> Result<Real>,
{
    if rollout.is_empty() {
        return Err(Error::Contract("empty rollout".into()));
    }
    let values: Vec<Real> = rollout
        .states
        .iter()
        .map(|s| value_fn(s))
        .collect::<Result<_>>()?;
    let next_values: Vec<Real> = rollout
        .next_states
        .iter()
        .map(|s| value_fn(s))
        .collect::<Result<_>>()?;
    gae_from_values(
        &rollout.rewards,
        &rollout.dones,
        &values,
        &next_values,
        &rollout.log_probs,
        gamma,
        lam,
    )
}

/// Clipped surrogate loss (to minimize):
/// mean of -min(ratio * A, clip(ratio, 1-eps, 1+eps) * A).
pub fn ppo_clip_loss(batch: &AdvantageBatch, new_log_probs: &[Real], clip: Real) -> Result<Real> {
    if clip <= 0.0 {
        return Err(Error::Contract(format!("clip must be > 0, got {clip}")));
    }
    if new_log_probs.len() != batch.advantages.len() {
        return Err(Error::Shape("ppo_clip_loss: length mismatch".into()));
    }
    let mut acc = 0.0;
    for ((a, old), new) in batch
        .advantages
        .iter()
        .zip(batch.old_log_probs.iter())
        .zip(new_log_probs.iter())
    {
        let ratio = (new - old).exp();
        let clipped = ratio.max(1.0 - clip).min(1.0 + clip);
        acc -= (ratio * a).min(clipped * a);
    }
    Ok(acc / batch.advantages.len() as Real)
}

/// Tape version of the clipped surrogate; `new_log_probs` is a Bx1 node.
pub fn ppo_clip_loss_on_tape(
    tape: &mut Tape,
    new_log_probs: VarId,
    batch: &AdvantageBatch,
    clip: Real,
) -> Result<VarId> {
    if clip <= 0.0 {
        return Err(Error::Contract(format!("clip must be > 0, got {clip}")));
    }
    let b = batch.advantages.len();
    let old = Mat::from_vec(b, 1, batch.old_log_probs.clone())?;
    let adv = Mat::from_vec(b, 1, batch.advantages.clone())?;
    let old_node = tape.leaf(old);
    let diff = tape.sub(new_log_probs, old_node)?;
    let ratio = tape.exp(diff);
    let surr1 = tape.mul_const(ratio, adv.clone())?;
    let clipped = tape.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let surr2 = tape.mul_const(clipped, adv)?;
    let m = tape.min_pair(surr1, surr2)?;
    let mean = tape.mean(m);
    Ok(tape.scale(mean, -1.0))
}
