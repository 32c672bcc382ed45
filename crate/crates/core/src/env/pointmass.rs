use super::{ActionSpec, Environment, RiskSpec, StepInfo, StepResult};
use crate::policy::Action;
use crate::{Error, Real, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Alternating safe/hazard segments along the x axis; risk probabilities and
/// gusts scale with the segment the point mass currently occupies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackConfig {
    pub segment_length: Real,
    /// Multiplier on risk-term probabilities inside SAFE segments.
    pub safe_p_scale: Real,
    /// Multiplier inside HAZARD segments.
    pub hazard_p_scale: Real,
    /// Whether gust impulses fire inside SAFE segments.
    pub gusts_in_safe: bool,
}

/// 2-D velocity-tracking point mass under semi-implicit Euler integration.
///
/// The observation is [position, velocity, command, last action]; risk
/// terms monitor the pre-step speed (scalar 0) and the commanded
/// acceleration magnitude (scalar 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointmassConfig {
    pub dt: Real,
    pub accel_limit: Real,
    pub track_weight: Real,
    pub track_sigma: Real,
    pub action_weight: Real,
    pub action_rate_weight: Real,
    /// Per-axis command range [min, max]; the command resamples per episode.
    pub cmd_range: [[Real; 2]; 2],
    pub risks: Vec<RiskSpec>,
    /// Apply a gust impulse every this many steps (0 disables gusts).
    pub gust_interval: usize,
    /// Impulse components drawn uniformly from [-gust_mag, gust_mag].
    pub gust_mag: Real,
    /// Terminate with `fall_penalty` when speed exceeds this (the unstable
    /// blow-up analog of a fall). Zero disables.
    pub fall_speed: Real,
    pub fall_penalty: Real,
    #[serde(default)]
    pub track: Option<TrackConfig>,
}

impl Default for PointmassConfig {
    fn default() -> Self {
        PointmassConfig {
            dt: 0.02,
            accel_limit: 5.0,
            track_weight: 1.0,
            track_sigma: 0.25,
            action_weight: 0.01,
            action_rate_weight: 0.01,
            cmd_range: [[-1.0, 1.0], [-1.0, 1.0]],
            risks: vec![
                // Speed threshold 2 m/s, weight 50; acceleration magnitude
                // near the actuation limit, weight 20.
                RiskSpec {
                    index: 0,
                    threshold: 2.0,
                    weight: 50.0,
                    p: 1e-3,
                },
                RiskSpec {
                    index: 1,
                    threshold: 4.5,
                    weight: 20.0,
                    p: 1e-3,
                },
            ],
            gust_interval: 0,
            gust_mag: 1.0,
            fall_speed: 4.0,
            fall_penalty: 50.0,
            track: None,
        }
    }
}

impl PointmassConfig {
    fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || self.accel_limit <= 0.0 || self.track_sigma <= 0.0 {
            return Err(Error::Config("dt, accel_limit, track_sigma must be > 0".into()));
        }
        for (i, [lo, hi]) in self.cmd_range.iter().enumerate() {
            if lo > hi {
                return Err(Error::Config(format!("cmd_range axis {i}: {lo} > {hi}")));
            }
        }
        for r in &self.risks {
            r.validate(2)?;
        }
        Ok(())
    }
}

pub struct PointmassEnv {
    cfg: PointmassConfig,
    horizon: usize,
    rng: ChaCha8Rng,
    pos: [Real; 2],
    vel: [Real; 2],
    cmd: [Real; 2],
    last_action: [Real; 2],
    steps: usize,
}

impl PointmassEnv {
    pub fn new(cfg: PointmassConfig, horizon: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(PointmassEnv {
            cfg,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pos: [0.0; 2],
            vel: [0.0; 2],
            cmd: [0.0; 2],
            last_action: [0.0; 2],
            steps: 0,
        })
    }

    pub fn config(&self) -> &PointmassConfig {
        &self.cfg
    }

    /// 0 = SAFE, 1 = HAZARD for track configs; None on the open field.
    pub fn segment(&self) -> Option<usize> {
        self.cfg.track.as_ref().map(|t| {
            let k = (self.pos[0] / t.segment_length).floor() as i64;
            (k.rem_euclid(2)) as usize
        })
    }

    fn obs(&self) -> Vec<Real> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.cmd[0],
            self.cmd[1],
            self.last_action[0],
            self.last_action[1],
        ]
    }

    fn speed(&self) -> Real {
        (self.vel[0] * self.vel[0] + self.vel[1] * self.vel[1]).sqrt()
    }
}

impl Environment for PointmassEnv {
    fn obs_dim(&self) -> usize {
        8
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Continuous {
            dim: 2,
            limit: self.cfg.accel_limit,
        }
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self) -> Vec<Real> {
        self.pos = [0.0; 2];
        self.vel = [0.0; 2];
        self.last_action = [0.0; 2];
        self.steps = 0;
        for i in 0..2 {
            let [lo, hi] = self.cfg.cmd_range[i];
            self.cmd[i] = if lo == hi { lo } else { self.rng.gen_range(lo..hi) };
        }
        self.obs()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let raw = action.as_continuous()?;
        if raw.len() != 2 {
            return Err(Error::Contract(format!(
                "pointmass action must be 2-d, got {}",
                raw.len()
            )));
        }
        let lim = self.cfg.accel_limit;
        let a = [raw[0].clamp(-lim, lim), raw[1].clamp(-lim, lim)];
        let accel_mag = (a[0] * a[0] + a[1] * a[1]).sqrt();

        let segment = self.segment();
        let (p_scale, gusts_here) = match (&self.cfg.track, segment) {
            (Some(t), Some(0)) => (t.safe_p_scale, t.gusts_in_safe),
            (Some(t), Some(_)) => (t.hazard_p_scale, true),
            _ => (1.0, true),
        };

        // Risk terms monitor the pre-step speed and the commanded
        // acceleration, so risk exposure lives in the state the policy
        // chose to be in.
        let scalars = [self.speed(), accel_mag];
        let (mut penalty, events) =
            super::risk_penalty(&scalars, &self.cfg.risks, p_scale, &mut self.rng);

        if gusts_here && self.cfg.gust_interval > 0 && self.steps > 0
            && self.steps % self.cfg.gust_interval == 0
        {
            let u = self.cfg.gust_mag;
            self.vel[0] += self.rng.gen_range(-u..u);
            self.vel[1] += self.rng.gen_range(-u..u);
        }

        // Semi-implicit Euler.
        self.vel[0] += a[0] * self.cfg.dt;
        self.vel[1] += a[1] * self.cfg.dt;
        self.pos[0] += self.vel[0] * self.cfg.dt;
        self.pos[1] += self.vel[1] * self.cfg.dt;

        let dv0 = self.cmd[0] - self.vel[0];
        let dv1 = self.cmd[1] - self.vel[1];
        let track_err = dv0 * dv0 + dv1 * dv1;
        let da0 = a[0] - self.last_action[0];
        let da1 = a[1] - self.last_action[1];
        let task = self.cfg.track_weight * (-track_err / self.cfg.track_sigma).exp()
            - self.cfg.action_weight * (a[0] * a[0] + a[1] * a[1])
            - self.cfg.action_rate_weight * (da0 * da0 + da1 * da1);

        self.last_action = a;
        self.steps += 1;

        let mut done = self.steps >= self.horizon;
        let mut fell = false;
        if self.cfg.fall_speed > 0.0 && self.speed() > self.cfg.fall_speed {
            penalty += self.cfg.fall_penalty;
            done = true;
            fell = true;
        }
        let finite = self.pos.iter().chain(self.vel.iter()).all(|v| v.is_finite());
        if !finite {
            done = true;
            fell = true;
        }

        let info = StepInfo {
            task_reward: task,
            penalty,
            risk_events: events,
            segment,
            fell,
        };
        Ok(StepResult::compose(self.obs(), task, penalty, done, info))
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_cfg() -> PointmassConfig {
        PointmassConfig {
            risks: vec![],
            gust_interval: 0,
            fall_speed: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_tracking_earns_full_weight() {
        let mut cfg = quiet_cfg();
        cfg.cmd_range = [[0.0, 0.0], [0.0, 0.0]];
        let mut env = PointmassEnv::new(cfg, 10, 0).unwrap();
        env.reset();
        // v = cmd = 0, a = 0: tracking exponent is exactly zero.
        let r = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert!((r.reward - 1.0).abs() < 1e-12);
        assert_eq!(r.info.risk_events, 0);
    }

    #[test]
    fn tracking_term_matches_closed_form() {
        // sigma = 0.25, |cmd - v| = 0.5 -> term = e^{-1}.
        let mut cfg = quiet_cfg();
        cfg.cmd_range = [[0.5, 0.5], [0.0, 0.0]];
        cfg.action_weight = 0.0;
        cfg.action_rate_weight = 0.0;
        let mut env = PointmassEnv::new(cfg, 10, 0).unwrap();
        env.reset();
        let r = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert!((r.reward - (-1.0f64).exp()).abs() < 1e-12, "{}", r.reward);
    }

    #[test]
    fn speed_risk_fires_above_threshold() {
        let mut cfg = quiet_cfg();
        cfg.risks = vec![RiskSpec {
            index: 0,
            threshold: 2.0,
            weight: 50.0,
            p: 1.0,
        }];
        cfg.fall_speed = 0.0;
        let mut env = PointmassEnv::new(cfg, 10, 0).unwrap();
        env.reset();
        env.vel = [2.5, 0.0];
        let r = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(r.info.risk_events, 1);
        assert!((r.info.penalty - 50.0).abs() < 1e-12);
        assert!((r.reward - (r.info.task_reward - r.info.penalty)).abs() == 0.0);
    }

    #[test]
    fn fall_terminates_with_penalty() {
        let mut cfg = quiet_cfg();
        cfg.fall_speed = 1.0;
        cfg.fall_penalty = 7.0;
        let mut env = PointmassEnv::new(cfg, 100, 0).unwrap();
        env.reset();
        env.vel = [2.0, 0.0];
        let r = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert!(r.done);
        assert!(r.info.fell);
        assert!((r.info.penalty - 7.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut cfg = PointmassConfig::default();
        cfg.gust_interval = 3;
        cfg.gust_mag = 1.0;
        let run = |seed| {
            let mut env = PointmassEnv::new(cfg.clone(), 20, seed).unwrap();
            env.reset();
            let mut out = Vec::new();
            for t in 0..20 {
                let a = Action::Continuous(vec![(t as Real * 0.1).sin(), 0.05]);
                out.extend(env.step(&a).unwrap().obs);
            }
            out
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn segments_alternate_along_x() {
        let mut cfg = quiet_cfg();
        cfg.track = Some(TrackConfig {
            segment_length: 2.0,
            safe_p_scale: 0.0,
            hazard_p_scale: 1.0,
            gusts_in_safe: false,
        });
        let mut env = PointmassEnv::new(cfg, 10, 0).unwrap();
        env.reset();
        env.pos = [0.5, 0.0];
        assert_eq!(env.segment(), Some(0));
        env.pos = [2.5, 0.0];
        assert_eq!(env.segment(), Some(1));
        env.pos = [4.1, 0.0];
        assert_eq!(env.segment(), Some(0));
        env.pos = [-0.5, 0.0];
        assert_eq!(env.segment(), Some(1));
    }

    #[test]
    fn hazard_only_config_outpaces_safe_only_in_events() {
        // Full-episode risk-event counts: hazard-only strictly exceeds
        // safe-only over 100 seeded episodes.
        let base = PointmassConfig {
            risks: vec![RiskSpec {
                index: 0,
                threshold: 0.5,
                weight: 1.0,
                p: 0.3,
            }],
            gust_interval: 10,
            gust_mag: 1.5,
            fall_speed: 0.0,
            cmd_range: [[1.0, 1.0], [0.0, 0.0]],
            ..Default::default()
        };
        let run = |safe_scale: Real, hazard_scale: Real| -> usize {
            let mut cfg = base.clone();
            cfg.track = Some(TrackConfig {
                segment_length: 1e6, // stay in segment 0 the whole episode
                safe_p_scale: safe_scale,
                hazard_p_scale: hazard_scale,
                gusts_in_safe: false,
            });
            let mut total = 0;
            for seed in 0..100 {
                let mut env = PointmassEnv::new(cfg.clone(), 100, seed).unwrap();
                env.reset();
                env.vel = [1.0, 0.0];
                for _ in 0..100 {
                    let r = env.step(&Action::Continuous(vec![2.0, 0.0])).unwrap();
                    total += r.info.risk_events;
                    if r.done {
                        break;
                    }
                }
            }
            total
        };
        // Force segment 0 to behave as hazard vs safe via the scales.
        let hazard_only = run(1.0, 1.0);
        let safe_only = run(0.0, 0.0);
        assert!(
            hazard_only > safe_only,
            "hazard {hazard_only} vs safe {safe_only}"
        );
        assert_eq!(safe_only, 0);
    }
}
