//! Named environment configurations used by the CLI and the test suites.

use super::{CliffConfig, EnvConfig, PointmassConfig, TrackConfig};
use crate::oracle::Outcome;
use crate::{DiscreteLaw, FiniteMdp};
use crate::{Error, Result};

/// Staged two-arm MDP (decision state, two arm states, terminal).
///
/// Rewards resolve one step after the choice so the risk shows up in the
/// successor state's value distribution:
///   safe  arm: 0.9 surely            -> Z(s0) = 0.855 (gamma 0.95)
///   risky arm: {1.2 w.p. 0.9, -1 w.p. 0.1}
///              mean 0.98, CVaR_0.5 = 0.76
/// so the expectation prefers the risky arm while CVaR_0.5 prefers safe.
pub fn two_arm_mdp() -> FiniteMdp {
    let to = |next: usize, reward: DiscreteLaw| Outcome {
        next,
        prob: 1.0,
        reward,
    };
    let zero = DiscreteLaw::point_mass(0.0);
    let safe_pay = DiscreteLaw::point_mass(0.9);
    let risky_pay = DiscreteLaw::new(vec![(-1.0, 0.1), (1.2, 0.9)]).unwrap();
    let outcomes = vec![
        // s0: action 0 -> safe arm state, action 1 -> risky arm state.
        vec![vec![to(1, zero.clone())], vec![to(2, zero.clone())]],
        // s1 (safe arm): both actions pay out and finish.
        vec![vec![to(3, safe_pay.clone())], vec![to(3, safe_pay)]],
        // s2 (risky arm).
        vec![vec![to(3, risky_pay.clone())], vec![to(3, risky_pay)]],
        // terminal
        vec![vec![to(3, zero.clone())], vec![to(3, zero)]],
    ];
    FiniteMdp::new(outcomes, vec![false, false, false, true], 0.95).unwrap()
}

/// Cliff instance small enough for exact policy enumeration (3x2, five
/// non-terminal states = 4^5 deterministic policies), with risk constants
/// placed so the CVaR-optimal route flips between eta = 1 and eta = 0.5:
/// at these constants the expectation-optimal route cuts through the cliff
/// cell while the CVaR_0.5 optimum detours over the top row, with exact
/// start-state margins of about 0.038 (eta=1) and 0.027 (eta=0.5) at
/// discount 0.95.
pub fn cliff_oracle_config() -> CliffConfig {
    CliffConfig {
        width: 3,
        height: 2,
        slip: 0.1,
        step_cost: 0.01,
        goal_reward: 1.0,
        risk_weight: 4.0,
        risk_p: 0.02,
        ..Default::default()
    }
}

/// Discount used with [`cliff_oracle_config`] throughout: small enough to
/// keep the conservative DP support grid fine, large enough that route
/// length matters.
pub const CLIFF_ORACLE_GAMMA: f64 = 0.95;

pub fn preset_names() -> &'static [&'static str] {
    &[
        "cliff",
        "cliff-oracle",
        "two-arm",
        "pointmass",
        "pointmass-gusty",
        "racetrack",
        "racetrack-safe",
        "racetrack-hazard",
    ]
}

/// Look up a named environment preset.
pub fn preset(name: &str) -> Result<EnvConfig> {
    match name {
        "cliff" => Ok(EnvConfig {
            id: "cliff".into(),
            horizon: 200,
            cliff: Some(CliffConfig::default()),
            pointmass: None,
        }),
        "cliff-oracle" => Ok(EnvConfig {
            id: "cliff".into(),
            horizon: 60,
            cliff: Some(cliff_oracle_config()),
            pointmass: None,
        }),
        "two-arm" => Ok(EnvConfig {
            id: "two-arm".into(),
            horizon: 8,
            cliff: None,
            pointmass: None,
        }),
        "pointmass" => Ok(EnvConfig {
            id: "pointmass".into(),
            horizon: 500,
            cliff: None,
            pointmass: Some(PointmassConfig::default()),
        }),
        "pointmass-gusty" => Ok(EnvConfig {
            id: "pointmass".into(),
            horizon: 500,
            cliff: None,
            pointmass: Some(gusty_pointmass_config()),
        }),
        "racetrack" => Ok(EnvConfig {
            id: "racetrack".into(),
            horizon: 500,
            cliff: None,
            pointmass: Some(racetrack_config(0.0, 1.0, false)),
        }),
        "racetrack-safe" => Ok(EnvConfig {
            id: "racetrack".into(),
            horizon: 500,
            cliff: None,
            pointmass: Some(racetrack_config(0.0, 0.0, false)),
        }),
        "racetrack-hazard" => Ok(EnvConfig {
            id: "racetrack".into(),
            horizon: 500,
            cliff: None,
            pointmass: Some(racetrack_config(1.0, 1.0, true)),
        }),
        other => Err(Error::Config(format!(
            "unknown preset '{other}'; available: {}",
            preset_names().join(", ")
        ))),
    }
}

/// Gust-disturbed open-field point mass for robustness runs.
pub fn gusty_pointmass_config() -> PointmassConfig {
    let mut cfg = PointmassConfig::default();
    cfg.gust_interval = 25;
    cfg.gust_mag = 1.2;
    cfg.cmd_range = [[0.6, 1.4], [-0.3, 0.3]];
    for r in &mut cfg.risks {
        r.p = 0.01;
    }
    cfg
}

fn racetrack_config(safe_scale: f64, hazard_scale: f64, gusts_in_safe: bool) -> PointmassConfig {
    let mut cfg = gusty_pointmass_config();
    cfg.cmd_range = [[0.6, 1.4], [-0.2, 0.2]];
    cfg.track = Some(TrackConfig {
        segment_length: 3.0,
        safe_p_scale: safe_scale,
        hazard_p_scale: hazard_scale,
        gusts_in_safe,
    });
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force_cvar_policy, BruteForceOptions, SolveOptions};
    use crate::risk::RiskLevel;

    #[test]
    fn all_presets_build() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            cfg.build(0).unwrap();
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn two_arm_flip_frozen_constants() {
        // Exact values derived from the two-point laws by hand (see the
        // builder doc comment).
        let mdp = two_arm_mdp();
        let opts = BruteForceOptions {
            solve: SolveOptions {
                n_atoms: 8801,
                ..Default::default()
            },
            ..Default::default()
        };
        let neutral = brute_force_cvar_policy(&mdp, RiskLevel::neutral(), &opts).unwrap();
        assert_eq!(neutral.best_actions[0], 1, "eta=1 takes the risky arm");
        assert!((neutral.best_cvar - 0.95 * 0.98).abs() < 0.01);
        let averse =
            brute_force_cvar_policy(&mdp, RiskLevel::new(0.5).unwrap(), &opts).unwrap();
        assert_eq!(averse.best_actions[0], 0, "eta=0.5 takes the safe arm");
        assert!((averse.best_cvar - 0.95 * 0.9).abs() < 0.01);
    }
}
