use super::{ActionSpec, Environment, RiskSpec, StepInfo, StepResult};
use crate::oracle::Outcome;
use crate::{DiscreteLaw, FiniteMdp};
use crate::policy::Action;
use crate::{Error, Real, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Gridworld with a cliff row along the bottom between start and goal.
///
/// Cells are (x, y) with y = 0 the bottom row; start is (0, 0), the goal
/// (width-1, 0), and every bottom-row cell in between is a cliff cell.
/// Standing in a cliff cell holds the risk indicator active: each step taken
/// from it draws the Bernoulli penalty independently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CliffConfig {
    pub width: usize,
    pub height: usize,
    /// Probability that the chosen action is replaced by a uniform one.
    pub slip: Real,
    pub step_cost: Real,
    pub goal_reward: Real,
    pub risk_weight: Real,
    pub risk_p: Real,
}

impl Default for CliffConfig {
    fn default() -> Self {
        CliffConfig {
            width: 8,
            height: 4,
            slip: 0.1,
            step_cost: 0.01,
            goal_reward: 1.0,
            risk_weight: 10.0,
            risk_p: 1e-3,
        }
    }
}

impl CliffConfig {
    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell_index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn goal(&self) -> usize {
        self.cell_index(self.width - 1, 0)
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn is_cliff(&self, cell: usize) -> bool {
        let (x, y) = (cell % self.width, cell / self.width);
        y == 0 && x > 0 && x + 1 < self.width
    }

    fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 1 {
            return Err(Error::Config(format!(
                "cliff grid must be at least 2x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::Config(format!("slip must be in [0,1], got {}", self.slip)));
        }
        self.risk_spec().validate(1)
    }

    fn risk_spec(&self) -> RiskSpec {
        RiskSpec {
            index: 0,
            threshold: 0.5,
            weight: self.risk_weight,
            p: self.risk_p,
        }
    }

    /// Effective move distribution of an action: intended with probability
    /// 1 - slip, plus slip/4 for each of the four directions. Wall-clamped
    /// duplicates are merged.
    fn move_distribution(&self, cell: usize, action: usize) -> Vec<(usize, Real)> {
        let mut acc: Vec<(usize, Real)> = Vec::with_capacity(5);
        let mut add = |next: usize, p: Real| {
            if p == 0.0 {
                return;
            }
            match acc.iter_mut().find(|(c, _)| *c == next) {
                Some((_, q)) => *q += p,
                None => acc.push((next, p)),
            }
        };
        add(self.neighbor(cell, action), 1.0 - self.slip);
        for dir in 0..4 {
            add(self.neighbor(cell, dir), self.slip / 4.0);
        }
        acc
    }

    fn neighbor(&self, cell: usize, action: usize) -> usize {
        let (x, y) = (cell % self.width, cell / self.width);
        let (nx, ny) = match action {
            0 => (x, (y + 1).min(self.height - 1)), // up
            1 => (x, y.saturating_sub(1)),          // down
            2 => (x.saturating_sub(1), y),          // left
            _ => ((x + 1).min(self.width - 1), y),  // right
        };
        self.cell_index(nx, ny)
    }

    /// Exact finite-MDP export of these dynamics at discount `gamma`,
    /// for the dynamic-programming oracles.
    pub fn export_mdp(&self, gamma: Real) -> Result<FiniteMdp> {
        self.validate()?;
        let n = self.n_cells();
        let goal = self.goal();
        let mut outcomes = Vec::with_capacity(n);
        for s in 0..n {
            let mut per_action = Vec::with_capacity(4);
            for a in 0..4 {
                let mut outs = Vec::new();
                if s == goal {
                    outs.push(Outcome {
                        next: goal,
                        prob: 1.0,
                        reward: DiscreteLaw::point_mass(0.0),
                    });
                } else {
                    for (next, prob) in self.move_distribution(s, a) {
                        let base = -self.step_cost
                            + if next == goal { self.goal_reward } else { 0.0 };
                        let reward = if self.is_cliff(s) {
                            DiscreteLaw::point_mass(base)
                                .convolve(&DiscreteLaw::bernoulli_penalty(
                                    self.risk_weight,
                                    self.risk_p,
                                )?)
                        } else {
                            DiscreteLaw::point_mass(base)
                        };
                        outs.push(Outcome { next, prob, reward });
                    }
                }
                per_action.push(outs);
            }
            outcomes.push(per_action);
        }
        let terminal: Vec<bool> = (0..n).map(|s| s == goal).collect();
        FiniteMdp::new(outcomes, terminal, gamma)
    }
}

pub struct CliffEnv {
    cfg: CliffConfig,
    horizon: usize,
    rng: ChaCha8Rng,
    cell: usize,
    steps: usize,
}

impl CliffEnv {
    pub fn new(cfg: CliffConfig, horizon: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(CliffEnv {
            cell: cfg.start(),
            cfg,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps: 0,
        })
    }

    pub fn config(&self) -> &CliffConfig {
        &self.cfg
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    fn one_hot(&self, cell: usize) -> Vec<Real> {
        let mut v = vec![0.0; self.cfg.n_cells()];
        v[cell] = 1.0;
        v
    }
}

impl Environment for CliffEnv {
    fn obs_dim(&self) -> usize {
        self.cfg.n_cells()
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete(4)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self) -> Vec<Real> {
        self.cell = self.cfg.start();
        self.steps = 0;
        self.one_hot(self.cell)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let a = action.as_discrete()?;
        if a >= 4 {
            return Err(Error::Contract(format!("cliff action must be in 0..4, got {a}")));
        }
        // Risk indicator monitors the cell the step is taken from.
        let scalars = [if self.cfg.is_cliff(self.cell) { 1.0 } else { 0.0 }];
        let (penalty, events) =
            super::risk_penalty(&scalars, &[self.cfg.risk_spec()], 1.0, &mut self.rng);

        let effective = if self.rng.gen_range(0.0..1.0) < self.cfg.slip {
            self.rng.gen_range(0..4)
        } else {
            a
        };
        let next = self.cfg.neighbor(self.cell, effective);
        let reached_goal = next == self.cfg.goal();
        let task = -self.cfg.step_cost + if reached_goal { self.cfg.goal_reward } else { 0.0 };

        self.cell = next;
        self.steps += 1;
        let done = reached_goal || self.steps >= self.horizon;
        let info = StepInfo {
            task_reward: task,
            penalty,
            risk_events: events,
            segment: None,
            fell: false,
        };
        Ok(StepResult::compose(self.one_hot(next), task, penalty, done, info))
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_slip_cfg() -> CliffConfig {
        CliffConfig {
            width: 4,
            height: 2,
            slip: 0.0,
            risk_weight: 10.0,
            risk_p: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn goal_gives_terminal_bonus() {
        let cfg = no_slip_cfg();
        let mut env = CliffEnv::new(cfg, 50, 0).unwrap();
        env.reset();
        // Walk the bottom row: right, right, right reaches the goal.
        let mut last = None;
        for _ in 0..3 {
            last = Some(env.step(&Action::Discrete(3)).unwrap());
        }
        let r = last.unwrap();
        assert!(r.done);
        assert!((r.reward - (1.0 - 0.01)).abs() < 1e-12);
    }

    #[test]
    fn safe_move_costs_step_only() {
        let mut env = CliffEnv::new(no_slip_cfg(), 50, 0).unwrap();
        env.reset();
        let r = env.step(&Action::Discrete(0)).unwrap();
        assert!((r.reward + 0.01).abs() < 1e-12);
        assert_eq!(r.info.risk_events, 0);
        assert!(!r.done);
    }

    #[test]
    fn cliff_cell_draws_penalty_with_certain_p() {
        let cfg = CliffConfig {
            risk_p: 1.0,
            ..no_slip_cfg()
        };
        let mut env = CliffEnv::new(cfg, 50, 0).unwrap();
        env.reset();
        // Step right into the cliff cell (1,0): entering is free.
        let r = env.step(&Action::Discrete(3)).unwrap();
        assert_eq!(r.info.risk_events, 0);
        // Next step is taken from the cliff cell: indicator active. It lands
        // on the second cliff cell (2,0), so no goal bonus yet.
        let r = env.step(&Action::Discrete(3)).unwrap();
        assert_eq!(r.info.risk_events, 1);
        assert!((r.reward - (-0.01 - 10.0)).abs() < 1e-12);
        assert!((r.reward - (r.info.task_reward - r.info.penalty)).abs() == 0.0);
    }

    #[test]
    fn seeded_trajectories_are_bit_identical() {
        let cfg = CliffConfig {
            slip: 0.3,
            risk_p: 0.5,
            ..Default::default()
        };
        let actions = [3, 3, 0, 3, 1, 3, 3, 2, 0, 3];
        let run = |seed: u64| {
            let mut env = CliffEnv::new(cfg.clone(), 50, seed).unwrap();
            let mut trace = vec![env.reset()];
            let mut rewards = Vec::new();
            for &a in &actions {
                let r = env.step(&Action::Discrete(a)).unwrap();
                rewards.push(r.reward);
                trace.push(r.obs);
                if r.done {
                    break;
                }
            }
            (trace, rewards)
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42).1, run(43).1);
    }

    #[test]
    fn export_matches_empirical_transitions() {
        let cfg = CliffConfig {
            width: 4,
            height: 2,
            slip: 0.2,
            risk_p: 0.0,
            ..Default::default()
        };
        let mdp = cfg.export_mdp(0.95).unwrap();
        // Empirical frequencies of (start cell, action right).
        let mut env = CliffEnv::new(cfg.clone(), usize::MAX, 7).unwrap();
        let n = 100_000;
        let mut counts = vec![0usize; cfg.n_cells()];
        for _ in 0..n {
            env.cell = cfg.start();
            env.steps = 0;
            let r = env.step(&Action::Discrete(3)).unwrap();
            let landed = r.obs.iter().position(|&v| v == 1.0).unwrap();
            counts[landed] += 1;
        }
        for o in mdp.outcomes(cfg.start(), 3) {
            let freq = counts[o.next] as Real / n as Real;
            let se = (o.prob * (1.0 - o.prob) / n as Real).sqrt();
            assert!(
                (freq - o.prob).abs() < 3.0 * se + 1e-12,
                "cell {}: {freq} vs {}",
                o.next,
                o.prob
            );
        }
    }

    #[test]
    fn export_reward_law_composition() {
        let cfg = CliffConfig {
            width: 4,
            height: 2,
            slip: 0.0,
            risk_weight: 10.0,
            risk_p: 0.2,
            ..Default::default()
        };
        let mdp = cfg.export_mdp(0.95).unwrap();
        // From the cliff cell (1,0) moving right into cliff cell (2,0):
        // base -0.01, penalty -10 w.p. 0.2.
        let cliff = cfg.cell_index(1, 0);
        let outs = mdp.outcomes(cliff, 3);
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].reward.atoms(), &[(-10.01, 0.2), (-0.01, 0.8)]);
        // Goal-entering transition carries the bonus.
        let before_goal = cfg.cell_index(2, 0);
        let outs = mdp.outcomes(before_goal, 3);
        assert_eq!(outs[0].next, cfg.goal());
        assert_eq!(outs[0].reward.atoms(), &[(-9.01, 0.2), (0.99, 0.8)]);
    }
}
