//! Distributional state-value critic: a fraction-conditioned value network
//! trained by quantile regression.
//!
//! The critic models Z(s), the state-value return distribution, as a
//! continuous quantile function. Fractions are embedded through a cosine
//! basis and an affine layer, merged with state features by elementwise
//! product, and decoded by a small head network.

use crate::nn::{Activation, Mlp, MlpVars};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::tape::{rho_kappa, VarId};
use crate::{Error, Mat, Real, Result, Tape};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Quantile fractions in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Fractions(Vec<Real>);

impl Fractions {
    pub fn new(values: Vec<Real>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("need at least one fraction".into()));
        }
        if values.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Contract("fractions must lie in [0,1]".into()));
        }
        Ok(Fractions(values))
    }

    pub fn values(&self) -> &[Real] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// n i.i.d. draws from U([0,1]).
pub fn sample_fractions<R: Rng>(n: usize, rng: &mut R) -> Result<Fractions> {
    if n == 0 {
        return Err(Error::Contract("cannot sample zero fractions".into()));
    }
    Fractions::new((0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
}

/// Evenly spaced interior fractions {i/(n+1), i = 1..n}; the deterministic
/// grid the meta controller reads.
pub fn fixed_fractions(n: usize) -> Result<Fractions> {
    if n == 0 {
        return Err(Error::Contract("cannot build zero fractions".into()));
    }
    Fractions::new((1..=n).map(|i| i as Real / (n + 1) as Real).collect())
}

/// Midpoint fractions {(i + 0.5)/n}; an n-point stand-in for the full
/// quantile function when comparing against exact distributions.
pub fn midpoint_fractions(n: usize) -> Result<Fractions> {
    if n == 0 {
        return Err(Error::Contract("cannot build zero fractions".into()));
    }
    Fractions::new((0..n).map(|i| (i as Real + 0.5) / n as Real).collect())
}

/// Fractions paired with estimated quantile values: the discrete view of
/// Z(s) the rest of the stack consumes.
#[derive(Debug, Clone)]
pub struct QuantileSample {
    pub fractions: Fractions,
    pub values: Vec<Real>,
}

impl QuantileSample {
    pub fn new(fractions: Fractions, values: Vec<Real>) -> Result<Self> {
        if fractions.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} fractions vs {} values",
                fractions.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("quantile values must be finite".into()));
        }
        Ok(QuantileSample { fractions, values })
    }

    pub fn mean(&self) -> Real {
        self.values.iter().sum::<Real>() / self.values.len() as Real
    }

    /// Equal-weight empirical distribution over the sampled values (sorted).
    pub fn to_empirical(&self) -> Result<crate::EmpiricalDistribution> {
        crate::EmpiricalDistribution::from_samples(&self.values)
    }
}

/// Architecture hyperparameters for [`CriticParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub obs_dim: usize,
    /// Hidden sizes of the state-feature network; its output width is the
    /// embedding dimension.
    pub feature_dims: Vec<usize>,
    /// Number of cosine basis functions for fraction conditioning.
    pub n_basis: usize,
    /// Hidden sizes of the head network after the feature/embedding merge.
    pub head_dims: Vec<usize>,
    pub activation: Activation,
}

impl CriticConfig {
    pub fn desk_default(obs_dim: usize) -> Self {
        CriticConfig {
            obs_dim,
            feature_dims: vec![64, 64],
            n_basis: 64,
            head_dims: vec![64],
            activation: Activation::Elu,
        }
    }

    pub fn embed_dim(&self) -> usize {
        *self.feature_dims.last().expect("feature dims")
    }
}

/// Critic parameters: state-feature MLP, fraction embedding (cosine basis ->
/// affine -> activation), and the value head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticParams {
    pub config: CriticConfig,
    pub feature: Mlp<Real>,
    pub embed_w: Mat,
    pub embed_b: Mat,
    pub head: Mlp<Real>,
}

impl CriticParams {
    pub fn init<R: Rng>(config: CriticConfig, rng: &mut R) -> Result<Self> {
        if config.feature_dims.is_empty() {
            return Err(Error::Config("feature_dims must be nonempty".into()));
        }
        if config.n_basis == 0 {
            return Err(Error::Config("n_basis must be >= 1".into()));
        }
        let mut feat_dims = vec![config.obs_dim];
        feat_dims.extend(&config.feature_dims);
        let feature = Mlp::new(&feat_dims, config.activation, config.activation, rng)?;

        let d = config.embed_dim();
        let limit = (6.0 / (config.n_basis + d) as f64).sqrt();
        let mut embed_w = Mat::zeros(config.n_basis, d);
        for v in embed_w.data_mut() {
            *v = rng.gen_range(-limit..limit);
        }
        let embed_b = Mat::zeros(1, d);

        let mut head_dims = vec![d];
        head_dims.extend(&config.head_dims);
        head_dims.push(1);
        let head = Mlp::new(&head_dims, config.activation, Activation::Identity, rng)?;

        Ok(CriticParams {
            config,
            feature,
            embed_w,
            embed_b,
            head,
        })
    }

    pub fn param_mats(&self) -> Vec<&Mat> {
        let mut v = self.feature.param_mats();
        v.push(&self.embed_w);
        v.push(&self.embed_b);
        v.extend(self.head.param_mats());
        v
    }

    pub fn param_mats_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = self.feature.param_mats_mut();
        v.push(&mut self.embed_w);
        v.push(&mut self.embed_b);
        v.extend(self.head.param_mats_mut());
        v
    }

    /// Register all parameters on a tape.
    pub fn register(&self, tape: &mut Tape) -> CriticVars {
        CriticVars {
            feature: self.feature.register(tape),
            embed_w: tape.param(self.embed_w.clone()),
            embed_b: tape.param(self.embed_b.clone()),
            head: self.head.register(tape),
        }
    }
}

pub struct CriticVars {
    pub feature: MlpVars,
    pub embed_w: VarId,
    pub embed_b: VarId,
    pub head: MlpVars,
}

/// Cosine feature matrix: row i is [cos(pi * j * tau_i)] for j = 0..n_basis.
fn cosine_basis(fractions: &Fractions, n_basis: usize) -> Mat {
    let n = fractions.len();
    let mut m = Mat::zeros(n, n_basis);
    for (i, &tau) in fractions.values().iter().enumerate() {
        for j in 0..n_basis {
            m.set(i, j, (std::f64::consts::PI * j as Real * tau).cos());
        }
    }
    m
}

/// Quantile values of one state at the given fractions (no gradients).
pub fn quantile_values(
    state: &[Real],
    fractions: &Fractions,
    params: &CriticParams,
) -> Result<QuantileSample> {
    let states = Mat::from_vec(1, state.len(), state.to_vec())?;
    let out = quantile_values_batch(&states, fractions, params)?;
    QuantileSample::new(fractions.clone(), out.row_slice(0).to_vec())
}

/// Quantile values for a batch of states sharing one fraction draw
/// (no gradients). Returns BxN.
pub fn quantile_values_batch(
    states: &Mat,
    fractions: &Fractions,
    params: &CriticParams,
) -> Result<Mat> {
    if states.cols() != params.config.obs_dim {
        return Err(Error::Shape(format!(
            "state dim {} does not match critic input {}",
            states.cols(),
            params.config.obs_dim
        )));
    }
    let b = states.rows();
    let n = fractions.len();
    let feats = params.feature.forward(states)?; // B x d
    let basis = cosine_basis(fractions, params.config.n_basis);
    let embedded = params
        .config
        .activation
        .apply(&basis.matmul(&params.embed_w)?.add_row_broadcast(&params.embed_b)?); // N x d

    let d = feats.cols();
    let mut merged = Mat::zeros(b * n, d);
    for bi in 0..b {
        for i in 0..n {
            for k in 0..d {
                merged.set(bi * n + i, k, feats.get(bi, k) * embedded.get(i, k));
            }
        }
    }
    let head_out = params.head.forward(&merged)?; // (B*N) x 1
    Mat::from_vec(b, n, head_out.data().to_vec())
}

/// Tape version of [`quantile_values_batch`]: BxN node, differentiable
/// w.r.t. the registered critic parameters.
pub fn quantile_values_on_tape(
    tape: &mut Tape,
    states: Mat,
    fractions: &Fractions,
    params: &CriticParams,
    vars: &CriticVars,
) -> Result<VarId> {
    if states.cols() != params.config.obs_dim {
        return Err(Error::Shape(format!(
            "state dim {} does not match critic input {}",
            states.cols(),
            params.config.obs_dim
        )));
    }
    let b = states.rows();
    let n = fractions.len();
    let x = tape.leaf(states);
    let feats = params.feature.forward_on_tape(tape, x, &vars.feature)?;
    let basis = tape.leaf(cosine_basis(fractions, params.config.n_basis));
    let pre = tape.affine(basis, vars.embed_w, vars.embed_b)?;
    let embedded = tape.activation(pre, params.config.activation);
    let merged = tape.row_kron(feats, embedded)?; // (B*N) x d
    let head_out = params.head.forward_on_tape(tape, merged, &vars.head)?;
    tape.reshape(head_out, b, n)
}

/// Bootstrapped distributional targets, one row per transition:
/// `r + gamma * (1 - done) * next_value[j]`. Next-state values are
/// constants here; no gradient flows through them.
pub fn bellman_targets(
    rewards: &[Real],
    gamma: Real,
    dones: &[bool],
    next_values: &Mat,
) -> Result<Mat> {
    let b = rewards.len();
    if dones.len() != b || next_values.rows() != b {
        return Err(Error::Shape(format!(
            "{} rewards, {} dones, {} next-value rows",
            b,
            dones.len(),
            next_values.rows()
        )));
    }
    let np = next_values.cols();
    let mut t = Mat::zeros(b, np);
    for bi in 0..b {
        let cont = if dones[bi] { 0.0 } else { gamma };
        for j in 0..np {
            t.set(bi, j, rewards[bi] + cont * next_values.get(bi, j));
        }
    }
    Ok(t)
}

/// TD delta matrix for one transition: delta[j][i] =
/// r + gamma * (1 - done) * next[j] - cur[i]. N' rows by N columns.
pub fn td_deltas(
    r: Real,
    gamma: Real,
    next_q: &QuantileSample,
    cur_q: &QuantileSample,
    done: bool,
) -> Result<Mat> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Contract(format!("gamma must be in [0,1), got {gamma}")));
    }
    let np = next_q.values.len();
    let n = cur_q.values.len();
    let mut d = Mat::zeros(np, n);
    let cont = if done { 0.0 } else { gamma };
    for j in 0..np {
        let target = r + cont * next_q.values[j];
        for i in 0..n {
            d.set(j, i, target - cur_q.values[i]);
        }
    }
    Ok(d)
}

/// Quantile Huber critic loss over one transition's delta matrix:
/// (1/N') sum_i sum_j |tau_i - 1{d<0}| L_kappa(d_{j,i}).
pub fn quantile_huber_loss(deltas: &Mat, fractions: &Fractions, kappa: Real) -> Result<Real> {
    if kappa <= 0.0 {
        return Err(Error::Contract(format!("kappa must be > 0, got {kappa}")));
    }
    let (np, n) = deltas.shape();
    if fractions.len() != n {
        return Err(Error::Shape(format!(
            "{} fractions for {n} delta columns",
            fractions.len()
        )));
    }
    let mut acc = 0.0;
    for j in 0..np {
        for (i, &tau) in fractions.values().iter().enumerate() {
            acc += rho_kappa(deltas.get(j, i), tau, kappa);
        }
    }
    Ok(acc / np as Real)
}

/// Mean state value: the average of quantile values over n fresh uniform
/// fraction draws.
pub fn mean_value<R: Rng>(
    state: &[Real],
    params: &CriticParams,
    n: usize,
    rng: &mut R,
) -> Result<Real> {
    let fr = sample_fractions(n, rng)?;
    Ok(quantile_values(state, &fr, params)?.mean())
}

/// Options for supervised quantile regression against samples of a fixed
/// distribution.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub steps: usize,
    pub fractions_per_step: usize,
    pub samples_per_step: usize,
    pub kappa: Real,
    pub adam: AdamConfig<Real>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            steps: 1500,
            fractions_per_step: 32,
            samples_per_step: 64,
            kappa: 1e-6,
            adam: AdamConfig::default(),
        }
    }
}

/// Train the critic's distribution at a single state directly against
/// samples: fresh fractions per step, targets drawn from `samples`.
/// Returns the final loss.
pub fn fit_to_samples<R: Rng>(
    params: &mut CriticParams,
    state: &[Real],
    samples: &[Real],
    opts: &FitOptions,
    rng: &mut R,
) -> Result<Real> {
    if samples.is_empty() {
        return Err(Error::Contract("no samples to fit".into()));
    }
    let mats: Vec<&Mat> = params.param_mats();
    let mut adam_state = AdamState::new(&mats);
    drop(mats);
    let states = Mat::from_vec(1, state.len(), state.to_vec())?;
    let mut last = 0.0;
    for _ in 0..opts.steps {
        let fr = sample_fractions(opts.fractions_per_step, rng)?;
        let mut targets = Mat::zeros(1, opts.samples_per_step);
        for j in 0..opts.samples_per_step {
            targets.set(0, j, samples[rng.gen_range(0..samples.len())]);
        }
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let cur = quantile_values_on_tape(&mut tape, states.clone(), &fr, params, &vars)?;
        let deltas = tape.batch_td_deltas(cur, targets)?;
        let loss = tape.quantile_huber(deltas, fr.values(), opts.kappa, 1)?;
        last = tape.value(loss).scalar()?;
        let grads = tape.backward(loss)?.param_grads(&tape);
        let mut mats = params.param_mats_mut();
        adam_step(&mut mats, &grads, &opts.adam, &mut adam_state)?;
    }
    Ok(last)
}
