use crate::critic::CriticParams;
use crate::env::{EnvConfig, Environment};
use crate::meta::{estimate_risk, select_policy, MetaConfig, MetaState, PolicyId};
use crate::policy::PolicyParams;
use crate::risk::RiskLevel;
use crate::{EmpiricalDistribution, Error, Real, Result};

/// Deployment-time controller: a fixed policy, or the IQR-driven switch
/// between a risk-neutral and a risk-averse snapshot (reading the neutral
/// snapshot's critic).
pub enum Controller<'a> {
    Fixed(&'a PolicyParams),
    Meta {
        neutral: &'a PolicyParams,
        averse: &'a PolicyParams,
        critic: &'a CriticParams,
        cfg: MetaConfig,
    },
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeStats {
    pub ret: Real,
    pub len: usize,
    pub risk_events: usize,
    pub fell: bool,
    /// Per-step (segment, window-averaged IQR) when IQR tracking is on and
    /// the environment exposes segments.
    pub segment_iqr: Vec<(usize, Real)>,
    /// Steps spent under the averse policy (meta controller only).
    pub averse_steps: usize,
}

/// Roll one episode with deterministic actions (Gaussian mean / argmax).
/// `track_iqr` evaluates the given critic's IQR each step for reporting.
pub fn run_episode(
    controller: &Controller,
    env: &mut dyn Environment,
    seed: u64,
    track_iqr: Option<(&CriticParams, usize)>,
) -> Result<EpisodeStats> {
    env.reseed(seed);
    let mut obs = env.reset();
    let mut stats = EpisodeStats::default();
    let mut meta_state = match controller {
        Controller::Meta { cfg, .. } => Some(MetaState::new(cfg)),
        Controller::Fixed(_) => None,
    };
    let mut tracker_state = track_iqr.map(|(_, _)| {
        MetaState::new(&MetaConfig::new(1.0, 10, 0.0, 32).expect("tracker config"))
    });

    for _ in 0..env.horizon() {
        let policy = match controller {
            Controller::Fixed(p) => p,
            Controller::Meta {
                neutral,
                averse,
                critic,
                cfg,
            } => {
                let state = meta_state.as_mut().unwrap();
                let est = estimate_risk(&obs, critic, cfg.n_fractions, state)?;
                match select_policy(&est, cfg, state) {
                    PolicyId::Neutral => neutral,
                    PolicyId::Averse => {
                        stats.averse_steps += 1;
                        averse
                    }
                }
            }
        };
        if let (Some((critic, n)), Some(ts)) = (track_iqr, tracker_state.as_mut()) {
            let est = estimate_risk(&obs, critic, n, ts)?;
            // Segment is attached after the step below using the step info.
            stats.segment_iqr.push((usize::MAX, est.window_iqr));
        }
        let action = policy.act_greedy(&obs)?;
        let res = env.step(&action)?;
        if let Some(last) = stats.segment_iqr.last_mut() {
            if let Some(seg) = res.info.segment {
                last.0 = seg;
            }
        }
        stats.ret += res.reward;
        stats.len += 1;
        stats.risk_events += res.info.risk_events;
        stats.fell |= res.info.fell;
        obs = res.obs;
        if res.done {
            break;
        }
    }
    stats.segment_iqr.retain(|(seg, _)| *seg != usize::MAX);
    Ok(stats)
}

/// Evaluation report over seeded deterministic episodes.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: Real,
    /// Worst/middle/best-case returns: the 0.25, 0.5, 0.75 quantiles of the
    /// episode-return distribution.
    pub q25: Real,
    pub q50: Real,
    pub q75: Real,
    pub risk_events_per_episode: Real,
    pub ttf: Real,
    pub fell: usize,
    pub returns: Vec<Real>,
}

fn episode_seed(base: u64, episode: u64) -> u64 {
    base.wrapping_add(episode.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Seeded deterministic rollouts of one controller.
pub fn evaluate(
    controller: &Controller,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Contract("episodes must be >= 1".into()));
    }
    let mut env = env_cfg.build(seed)?;
    let mut returns = Vec::with_capacity(episodes);
    let mut events = 0usize;
    let mut lens = 0usize;
    let mut fell = 0usize;
    for ep in 0..episodes {
        let stats = run_episode(controller, env.as_mut(), episode_seed(seed, ep as u64), None)?;
        returns.push(stats.ret);
        events += stats.risk_events;
        lens += stats.len;
        if stats.fell {
            fell += 1;
        }
    }
    let dist = EmpiricalDistribution::from_samples(&returns)?;
    Ok(EvalReport {
        episodes,
        mean_return: dist.mean(),
        q25: dist.quantile_at(0.25)?,
        q50: dist.quantile_at(0.5)?,
        q75: dist.quantile_at(0.75)?,
        risk_events_per_episode: events as Real / episodes as Real,
        ttf: lens as Real / episodes as Real / env.horizon() as Real,
        fell,
        returns,
    })
}

/// One row of the quantile-of-return comparison table.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub name: String,
    pub report: EvalReport,
}

/// Evaluate several controllers over shared episode seeds.
pub fn compare(
    entries: &[(String, Controller)],
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<CompareRow>> {
    if entries.len() < 2 {
        return Err(Error::Contract("compare needs at least two controllers".into()));
    }
    entries
        .iter()
        .map(|(name, controller)| {
            Ok(CompareRow {
                name: name.clone(),
                report: evaluate(controller, env_cfg, episodes, seed)?,
            })
        })
        .collect()
}

/// Render comparison rows as a tab-separated table.
pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out =
        String::from("name\tepisodes\tq25\tq50\tq75\tmean\trisk_events_per_episode\tttf\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.name,
            r.report.episodes,
            r.report.q25,
            r.report.q50,
            r.report.q75,
            r.report.mean_return,
            r.report.risk_events_per_episode,
            r.report.ttf
        ));
    }
    out
}

/// Run the neutral policy in an environment and collect the window-averaged
/// IQR stream for threshold calibration.
pub fn collect_iqr_stream(
    policy: &PolicyParams,
    critic: &CriticParams,
    env_cfg: &EnvConfig,
    episodes: usize,
    window: usize,
    n_fractions: usize,
    seed: u64,
) -> Result<Vec<Real>> {
    if episodes == 0 {
        return Err(Error::Contract("episodes must be >= 1".into()));
    }
    let mut env = env_cfg.build(seed)?;
    let tracker_cfg = MetaConfig::new(1.0, window, 0.0, n_fractions.max(4))?;
    let mut stream = Vec::new();
    for ep in 0..episodes {
        env.reseed(episode_seed(seed, ep as u64));
        let mut obs = env.reset();
        let mut state = MetaState::new(&tracker_cfg);
        for _ in 0..env.horizon() {
            let est = estimate_risk(&obs, critic, tracker_cfg.n_fractions, &mut state)?;
            stream.push(est.window_iqr);
            let action = policy.act_greedy(&obs)?;
            let res = env.step(&action)?;
            obs = res.obs;
            if res.done {
                break;
            }
        }
    }
    Ok(stream)
}

/// CVaR_0.5 of a return sample (reported alongside comparison tables).
pub fn cvar_half(returns: &[Real]) -> Result<Real> {
    Ok(EmpiricalDistribution::from_samples(returns)?.cvar(RiskLevel::new(0.5)?))
}
