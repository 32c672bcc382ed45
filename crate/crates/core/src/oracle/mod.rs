//! Exact and brute-force ground truth: distributional dynamic programming on
//! finite MDPs, p-Wasserstein distances, and CVaR-optimal policy search by
//! enumeration.

mod brute;
mod categorical;
mod dp;
mod law;
mod mdp;
mod wasserstein;

pub use brute::{brute_force_cvar_policy, BruteForceOptions, BruteForceResult, PolicyEval};
pub use categorical::{CategoricalDist, Grid};
pub use dp::{
    distributional_bellman_backup, measure_contraction, solve_return_distribution, SolveOptions,
};
pub use law::DiscreteLaw;
pub use mdp::{policy_iteration, simulate_episode_return, FiniteMdp, Outcome, TabularPolicy};
pub use wasserstein::wasserstein_p;
