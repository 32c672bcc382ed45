//! Risk-aware policy switching: estimate the current risk level from the
//! critic's value distribution via IQR and pick between a risk-neutral and
//! a risk-averse policy snapshot, with hysteresis.

use crate::critic::{fixed_fractions, quantile_values, CriticParams};
use crate::{EmpiricalDistribution, Error, Real, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyId {
    Neutral,
    Averse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaConfig {
    /// IQR level (units of return) separating calm from risky.
    pub iqr_threshold: Real,
    /// Rolling-mean window over instantaneous IQR estimates, in steps.
    pub window: usize,
    /// Hysteresis half-width around the threshold.
    pub margin: Real,
    /// Fractions per IQR estimate (evenly spaced, deterministic).
    pub n_fractions: usize,
}

impl MetaConfig {
    pub fn new(iqr_threshold: Real, window: usize, margin: Real, n_fractions: usize) -> Result<Self> {
        if iqr_threshold <= 0.0 {
            return Err(Error::Config("iqr_threshold must be > 0".into()));
        }
        if window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if margin < 0.0 {
            return Err(Error::Config("margin must be >= 0".into()));
        }
        if n_fractions < 4 {
            return Err(Error::Config("need at least 4 fractions for an IQR".into()));
        }
        Ok(MetaConfig {
            iqr_threshold,
            window,
            margin,
            n_fractions,
        })
    }

    /// Window 10 and margin 5% of the threshold.
    pub fn with_defaults(iqr_threshold: Real) -> Result<Self> {
        Self::new(iqr_threshold, 10, 0.05 * iqr_threshold, 32)
    }
}

/// One step's risk reading.
#[derive(Debug, Clone, Copy)]
pub struct RiskEstimate {
    pub iqr: Real,
    pub window_iqr: Real,
    pub active: PolicyId,
    pub step: u64,
}

/// Rolling window plus the currently selected policy.
#[derive(Debug, Clone)]
pub struct MetaState {
    window: VecDeque<Real>,
    capacity: usize,
    active: PolicyId,
    step: u64,
}

impl MetaState {
    pub fn new(cfg: &MetaConfig) -> Self {
        MetaState {
            window: VecDeque::with_capacity(cfg.window),
            capacity: cfg.window,
            active: PolicyId::Neutral,
            step: 0,
        }
    }

    pub fn active(&self) -> PolicyId {
        self.active
    }
}

/// Instantaneous IQR of the critic's value distribution at a state, folded
/// into the rolling window. Reads the critic only; which policy is acting
/// does not enter.
pub fn estimate_risk(
    state: &[Real],
    critic: &CriticParams,
    n_fractions: usize,
    meta: &mut MetaState,
) -> Result<RiskEstimate> {
    if n_fractions < 4 {
        return Err(Error::Contract("need at least 4 fractions for an IQR".into()));
    }
    let fr = fixed_fractions(n_fractions)?;
    let sample = quantile_values(state, &fr, critic)?;
    let iqr = sample.to_empirical()?.iqr();
    if meta.window.len() == meta.capacity {
        meta.window.pop_front();
    }
    meta.window.push_back(iqr);
    let window_iqr = meta.window.iter().sum::<Real>() / meta.window.len() as Real;
    meta.step += 1;
    Ok(RiskEstimate {
        iqr,
        window_iqr,
        active: meta.active,
        step: meta.step,
    })
}

/// Hysteresis switch: averse above threshold + margin, neutral below
/// threshold - margin, previous selection inside the band.
pub fn select_policy(est: &RiskEstimate, cfg: &MetaConfig, meta: &mut MetaState) -> PolicyId {
    if est.window_iqr > cfg.iqr_threshold + cfg.margin {
        meta.active = PolicyId::Averse;
    } else if est.window_iqr < cfg.iqr_threshold - cfg.margin {
        meta.active = PolicyId::Neutral;
    }
    meta.active
}

/// Threshold calibration: the 90th percentile of window-averaged IQR
/// readings collected while the neutral policy runs in a safe-only
/// configuration. `window_iqrs` is that stream.
pub fn calibrate_threshold(window_iqrs: &[Real]) -> Result<Real> {
    if window_iqrs.is_empty() {
        return Err(Error::Contract("no IQR readings to calibrate from".into()));
    }
    let dist = EmpiricalDistribution::from_samples(window_iqrs)?;
    let threshold = dist.quantile_at(0.9)?;
    if threshold <= 0.0 {
        return Err(Error::Numeric(
            "calibration saw an all-zero IQR stream; retrain the critic".into(),
        ));
    }
    Ok(threshold)
}
