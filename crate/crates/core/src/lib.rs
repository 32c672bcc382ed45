//! Risk-sensitive distributional actor-critic at desk scale.
//!
//! The stack: stochastic environments with Bernoulli risk-injected rewards, a
//! quantile-regression value distribution critic, CVaR-distorted policy
//! gradients with PPO-Clip, an IQR-driven meta controller that switches
//! between risk-neutral and risk-averse policy snapshots, and exact
//! distributional dynamic-programming oracles on finite MDPs for verification.
//!
//! Numeric kernels are generic over the scalar type (see [`scalar::Scalar`]);
//! the crate-root aliases pin everything to `f64`, which the training stack
//! and file formats use throughout.

pub mod scalar;
pub mod mat;
pub mod tape;
pub mod nn;
pub mod optim;
pub mod gradcheck;
pub mod risk;
pub mod oracle;
pub mod critic;
pub mod policy;
pub mod env;
pub mod meta;
pub mod train;

mod error;
pub use error::{Error, Result};

/// Scalar type used by the concrete training stack and all file formats.
pub type Real = f64;

pub type Mat = mat::Mat<Real>;
pub type Tape = tape::Tape<Real>;
pub type Mlp = nn::Mlp<Real>;
pub type AdamState = optim::AdamState<Real>;
pub type EmpiricalDistribution = risk::EmpiricalDistribution<Real>;
pub type RiskLevel = risk::RiskLevel<Real>;
pub type DiscreteLaw = oracle::DiscreteLaw<Real>;
pub type CategoricalDist = oracle::CategoricalDist<Real>;
pub type FiniteMdp = oracle::FiniteMdp<Real>;
