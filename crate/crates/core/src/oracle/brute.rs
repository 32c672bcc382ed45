use super::categorical::CategoricalDist;
use super::dp::{solve_return_distribution, SolveOptions};
use super::mdp::{FiniteMdp, TabularPolicy};
use crate::risk::RiskLevel;
use crate::scalar::{cast, Scalar};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct BruteForceOptions<T> {
    /// Start state whose return CVaR ranks policies.
    pub start: usize,
    /// Refuse to enumerate more deterministic policies than this.
    pub max_enumerate: u64,
    /// Evaluate a seeded random subset of this size instead of erroring when
    /// the policy count exceeds `max_enumerate`.
    pub sample: Option<(usize, u64)>,
    /// Skip exact distributional evaluation of policies whose exact mean
    /// (an upper bound on CVaR) cannot beat the current best.
    pub prune_by_mean: bool,
    pub solve: SolveOptions<T>,
}

impl<T: Scalar> Default for BruteForceOptions<T> {
    fn default() -> Self {
        BruteForceOptions {
            start: 0,
            max_enumerate: 65_536, // 4^8
            sample: None,
            prune_by_mean: true,
            solve: SolveOptions::default(),
        }
    }
}

/// Evaluation record of one enumerated policy.
#[derive(Debug, Clone)]
pub struct PolicyEval<T> {
    pub actions: Vec<usize>,
    pub mean: T,
    /// Exact start-state CVaR; `None` when pruned by the mean bound.
    pub cvar: Option<T>,
}

#[derive(Debug, Clone)]
pub struct BruteForceResult<T> {
    pub best_actions: Vec<usize>,
    pub best_cvar: T,
    pub evals: Vec<PolicyEval<T>>,
}

/// Brute-force CVaR-optimal stationary deterministic policy.
///
/// Enumerates deterministic policies in lexicographic action order (ties keep
/// the first), evaluating each start-state return distribution exactly and
/// ranking by CVaR_eta. Pruning uses CVaR <= mean with exact means from the
/// linear solve, so it never discards an optimum; warm-started iteration
/// keeps consecutive evaluations cheap.
pub fn brute_force_cvar_policy<T: Scalar>(
    mdp: &FiniteMdp<T>,
    eta: RiskLevel<T>,
    opts: &BruteForceOptions<T>,
) -> Result<BruteForceResult<T>> {
    if opts.start >= mdp.n_states() || mdp.is_terminal(opts.start) {
        return Err(Error::Contract(format!(
            "start state {} must be a non-terminal state",
            opts.start
        )));
    }
    let decision: Vec<usize> = (0..mdp.n_states())
        .filter(|&s| !mdp.is_terminal(s))
        .collect();
    let count = (mdp.n_actions() as f64).powi(decision.len() as i32);
    let enumerable = count <= opts.max_enumerate as f64;
    if !enumerable && opts.sample.is_none() {
        return Err(Error::Contract(format!(
            "{count} deterministic policies exceed the cap of {}; supply a sampling budget",
            opts.max_enumerate
        )));
    }

    let policies: Vec<Vec<usize>> = if enumerable {
        LexPolicies {
            digits: vec![0; decision.len()],
            n_actions: mdp.n_actions(),
            done: decision.is_empty(),
        }
        .collect()
    } else {
        let (k, seed) = opts.sample.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_actions = mdp.n_actions();
        let len = decision.len();
        (0..k)
            .map(|_| (0..len).map(|_| rng.gen_range(0..n_actions)).collect())
            .collect()
    };

    // Exact means first (cheap linear solves). CVaR_eta <= mean, so in
    // descending-mean order the first time the mean bound drops below the
    // incumbent CVaR everything after it is pruned too.
    let mut ranked: Vec<(Vec<usize>, T)> = Vec::with_capacity(policies.len());
    for digits in policies {
        let mut actions = vec![0usize; mdp.n_states()];
        for (k, &s) in decision.iter().enumerate() {
            actions[s] = digits[k];
        }
        let policy = TabularPolicy::deterministic(&actions, mdp.n_actions())?;
        let mean = mdp.policy_values(&policy)?[opts.start];
        ranked.push((actions, mean));
    }

    if eta.eta() == T::one() {
        // CVaR_1 is the expectation; the linear solve is already exact.
        let mut best: Option<(T, &Vec<usize>)> = None;
        for (actions, mean) in &ranked {
            let better = match &best {
                None => true,
                Some((bm, ba)) => {
                    *mean > *bm || (*mean == *bm && actions.as_slice() < ba.as_slice())
                }
            };
            if better {
                best = Some((*mean, actions));
            }
        }
        let (best_cvar, best_actions) = best
            .map(|(m, a)| (m, a.clone()))
            .ok_or_else(|| Error::Contract("no policies enumerated".into()))?;
        let evals = ranked
            .into_iter()
            .map(|(actions, mean)| PolicyEval {
                actions,
                mean,
                cvar: Some(mean),
            })
            .collect();
        return Ok(BruteForceResult {
            best_actions,
            best_cvar,
            evals,
        });
    }

    if opts.prune_by_mean {
        // Stable sort keeps lexicographic order within equal means, so the
        // lexicographic tie-break below survives the reordering.
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    }

    // Grid spacing enters the pruning margin: projected CVaR carries a few
    // spacings of bias, exact means carry none.
    let (lo, hi) = mdp.return_bounds();
    let spacing = (hi - lo) / cast::<T>((opts.solve.n_atoms - 1) as f64);
    let margin = spacing * cast::<T>(4.0);

    let mut best_actions: Option<Vec<usize>> = None;
    let mut best_cvar = T::neg_infinity();
    let mut evals = Vec::with_capacity(ranked.len());
    let mut warm: Option<Vec<CategoricalDist<T>>> = None;
    let mut stopped = false;

    for (actions, mean) in ranked {
        if stopped || (opts.prune_by_mean && mean < best_cvar - margin) {
            if opts.prune_by_mean {
                // Descending means: every later policy is bounded out too.
                stopped = true;
            }
            evals.push(PolicyEval {
                actions,
                mean,
                cvar: None,
            });
            continue;
        }
        let policy = TabularPolicy::deterministic(&actions, mdp.n_actions())?;
        let z = solve_return_distribution(mdp, &policy, &opts.solve, warm.take())?;
        let cvar = z[opts.start].cvar(eta)?;
        warm = Some(z);
        let better = match &best_actions {
            None => true,
            Some(ba) => cvar > best_cvar || (cvar == best_cvar && actions < *ba),
        };
        if better {
            best_cvar = cvar;
            best_actions = Some(actions.clone());
        }
        evals.push(PolicyEval {
            actions,
            mean,
            cvar: Some(cvar),
        });
    }

    Ok(BruteForceResult {
        best_actions: best_actions
            .ok_or_else(|| Error::Contract("no policies enumerated".into()))?,
        best_cvar,
        evals,
    })
}

/// Lexicographic enumeration over action tuples (last state varies fastest).
struct LexPolicies {
    digits: Vec<usize>,
    n_actions: usize,
    done: bool,
}

impl Iterator for LexPolicies {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.digits.clone();
        let mut pos = self.digits.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.n_actions {
                break;
            }
            self.digits[pos] = 0;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::law::DiscreteLaw;
    use crate::oracle::mdp::policy_iteration;

    /// Two-arm bandit as an MDP: decision state 0, terminal state 1.
    /// Safe arm pays 0.9 surely; risky arm pays {1.2 w.p. 0.9, -1 w.p. 0.1}.
    ///
    /// Hand computation frozen into the asserts below:
    ///   safe:  mean 0.9,  CVaR_0.5 = 0.9
    ///   risky: mean 0.98, CVaR_0.5 = (0.1*(-1) + 0.4*1.2)/0.5 = 0.76
    /// so eta=1 prefers risky and eta=0.5 prefers safe.
    pub(crate) fn two_arm() -> FiniteMdp<f64> {
        FiniteMdp::from_state_action(
            vec![
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            vec![
                vec![
                    DiscreteLaw::point_mass(0.9),
                    DiscreteLaw::new(vec![(-1.0, 0.1), (1.2, 0.9)]).unwrap(),
                ],
                vec![DiscreteLaw::point_mass(0.0), DiscreteLaw::point_mass(0.0)],
            ],
            vec![false, true],
            0.95,
        )
        .unwrap()
    }

    #[test]
    fn lexicographic_enumeration_order() {
        let it = LexPolicies {
            digits: vec![0, 0],
            n_actions: 2,
            done: false,
        };
        let all: Vec<Vec<usize>> = it.collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn eta_one_matches_policy_iteration() {
        let mdp = two_arm();
        let opts = BruteForceOptions {
            solve: SolveOptions {
                n_atoms: 8801,
                ..Default::default()
            },
            ..Default::default()
        };
        let res = brute_force_cvar_policy(&mdp, RiskLevel::neutral(), &opts).unwrap();
        let (_, pi_star) = policy_iteration(&mdp).unwrap();
        assert_eq!(res.best_actions[0], pi_star[0]);
        assert_eq!(res.best_actions[0], 1, "risky arm has the higher mean");
        assert!((res.best_cvar - 0.98).abs() < 0.01);
    }

    #[test]
    fn risk_preference_flips_at_half() {
        let mdp = two_arm();
        let opts = BruteForceOptions {
            solve: SolveOptions {
                n_atoms: 8801,
                ..Default::default()
            },
            ..Default::default()
        };
        let averse =
            brute_force_cvar_policy(&mdp, RiskLevel::new(0.5).unwrap(), &opts).unwrap();
        assert_eq!(averse.best_actions[0], 0, "safe arm wins the bottom half");
        assert!((averse.best_cvar - 0.9).abs() < 0.01, "{}", averse.best_cvar);
        // Risky arm's exact CVaR_0.5 for comparison.
        let risky = averse
            .evals
            .iter()
            .find(|e| e.actions[0] == 1)
            .and_then(|e| e.cvar)
            .unwrap();
        assert!((risky - 0.76).abs() < 0.01, "{risky}");
    }

    #[test]
    fn identical_arms_tie_break_lexicographic() {
        let mdp = FiniteMdp::from_state_action(
            vec![
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            vec![
                vec![DiscreteLaw::point_mass(0.5), DiscreteLaw::point_mass(0.5)],
                vec![DiscreteLaw::point_mass(0.0), DiscreteLaw::point_mass(0.0)],
            ],
            vec![false, true],
            0.9,
        )
        .unwrap();
        let res = brute_force_cvar_policy(
            &mdp,
            RiskLevel::new(0.5).unwrap(),
            &BruteForceOptions::default(),
        )
        .unwrap();
        assert_eq!(res.best_actions[0], 0);
    }

    #[test]
    fn enumeration_above_cap_errors_without_sampling() {
        let mdp = two_arm();
        let opts = BruteForceOptions {
            max_enumerate: 1,
            ..Default::default()
        };
        assert!(matches!(
            brute_force_cvar_policy(&mdp, RiskLevel::neutral(), &opts),
            Err(Error::Contract(_))
        ));
        let opts = BruteForceOptions {
            max_enumerate: 1,
            sample: Some((8, 42)),
            ..Default::default()
        };
        assert!(brute_force_cvar_policy(&mdp, RiskLevel::neutral(), &opts).is_ok());
    }

    #[test]
    fn pruning_never_discards_the_optimum() {
        let mdp = two_arm();
        let eta = RiskLevel::new(0.5).unwrap();
        let pruned = brute_force_cvar_policy(
            &mdp,
            eta,
            &BruteForceOptions {
                prune_by_mean: true,
                ..Default::default()
            },
        )
        .unwrap();
        let full = brute_force_cvar_policy(
            &mdp,
            eta,
            &BruteForceOptions {
                prune_by_mean: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(pruned.best_actions, full.best_actions);
        assert!((pruned.best_cvar - full.best_cvar).abs() < 1e-9);
    }
}
