//! Distortion risk measures and distribution statistics: CVaR, IQR,
//! quantiles of empirical distributions, and distorted expectations.

use crate::scalar::{cast, Scalar};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// CVaR level eta in (0, 1]. CVaR_1 is the ordinary expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RiskLevel<T>(T);

impl<T: Scalar> RiskLevel<T> {
    pub fn new(eta: T) -> Result<Self> {
        if eta > T::zero() && eta <= T::one() {
            Ok(RiskLevel(eta))
        } else {
            Err(Error::Contract(format!("risk level must be in (0,1], got {eta}")))
        }
    }

    pub fn neutral() -> Self {
        RiskLevel(T::one())
    }

    pub fn eta(self) -> T {
        self.0
    }
}

/// CVaR distortion of a fraction: beta(tau) = eta * tau, which turns
/// uniform sampling on [0,1] into uniform sampling on [0,eta].
pub fn cvar_distort<T: Scalar>(tau: T, eta: RiskLevel<T>) -> T {
    eta.eta() * tau
}

/// Finite weighted distribution with sorted support.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution<T> {
    values: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> EmpiricalDistribution<T> {
    /// Equal-weight sample; values are sorted internally.
    pub fn from_samples(samples: &[T]) -> Result<Self> {
        let w = T::one() / cast::<T>(samples.len().max(1) as f64);
        Self::from_weighted(samples.iter().map(|&v| (v, w)).collect())
    }

    /// Weighted atoms; weights must be nonnegative with positive sum and are
    /// normalized to sum to one. Values are sorted, ties merged.
    pub fn from_weighted(mut atoms: Vec<(T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Contract("empty distribution".into()));
        }
        if atoms.iter().any(|(v, w)| !v.is_finite() || *w < T::zero()) {
            return Err(Error::Contract(
                "distribution needs finite values and nonnegative weights".into(),
            ));
        }
        let total: T = atoms.iter().map(|(_, w)| *w).sum();
        if total <= T::zero() {
            return Err(Error::Contract("weights must have positive sum".into()));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut values = Vec::with_capacity(atoms.len());
        let mut weights = Vec::with_capacity(atoms.len());
        for (v, w) in atoms {
            if w == T::zero() {
                continue;
            }
            if values.last() == Some(&v) {
                let last = weights.len() - 1;
                weights[last] += w / total;
            } else {
                values.push(v);
                weights.push(w / total);
            }
        }
        Ok(EmpiricalDistribution { values, weights })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Sorted (value, weight) atoms.
    pub fn atoms(&self) -> Vec<(T, T)> {
        self.values
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .collect()
    }

    pub fn mean(&self) -> T {
        self.values
            .iter()
            .zip(self.weights.iter())
            .map(|(&v, &w)| v * w)
            .sum()
    }

    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        *self.values.last().unwrap()
    }

    /// Left-continuous inverse CDF: the smallest value whose cumulative
    /// weight reaches tau. Requires tau in (0, 1].
    pub fn quantile_at(&self, tau: T) -> Result<T> {
        if tau <= T::zero() || tau > T::one() {
            return Err(Error::Contract(format!("tau must be in (0,1], got {tau}")));
        }
        Ok(self.quantile_clamped(tau))
    }

    fn quantile_clamped(&self, tau: T) -> T {
        if tau <= T::zero() {
            return self.values[0];
        }
        let mut cum = T::zero();
        // Tiny slack so cumulative-rounding does not skip an atom.
        let slack = cast::<T>(1e-12);
        for (v, w) in self.values.iter().zip(self.weights.iter()) {
            cum += *w;
            if cum + slack >= tau {
                return *v;
            }
        }
        *self.values.last().unwrap()
    }

    /// Exact CVaR_eta: (1/eta) * integral_0^eta F^{-1}(u) du over the
    /// piecewise-constant inverse CDF.
    pub fn cvar(&self, eta: RiskLevel<T>) -> T {
        let eta = eta.eta();
        let mut remaining = eta;
        let mut acc = T::zero();
        for (v, w) in self.values.iter().zip(self.weights.iter()) {
            if remaining <= T::zero() {
                break;
            }
            let take = remaining.min(*w);
            acc += *v * take;
            remaining -= take;
        }
        // Any residual mass (floating drift) extends the last atom.
        if remaining > T::zero() {
            acc += *self.values.last().unwrap() * remaining;
        }
        acc / eta
    }

    /// Interquartile range: F^{-1}(0.75) - F^{-1}(0.25).
    pub fn iqr(&self) -> T {
        self.quantile_clamped(cast(0.75)) - self.quantile_clamped(cast(0.25))
    }
}

/// Exact CVaR over raw sorted (value, mass) atoms; shared by the
/// categorical-distribution oracle so both paths agree by construction.
pub fn cvar_from_atoms<T: Scalar>(atoms: &[(T, T)], eta: RiskLevel<T>) -> Result<T> {
    Ok(EmpiricalDistribution::from_weighted(atoms.to_vec())?.cvar(eta))
}

/// Monte-Carlo CVaR of an arbitrary quantile function: the mean of
/// `quantile_fn` at `n` fractions drawn uniformly from [0, eta].
pub fn cvar_value_sampled<T, F, R>(quantile_fn: F, eta: RiskLevel<T>, n: usize, rng: &mut R) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
    R: Rng,
{
    if n == 0 {
        return Err(Error::Contract("need at least one fraction sample".into()));
    }
    let mut acc = T::zero();
    for _ in 0..n {
        let u = cast::<T>(rng.gen_range(0.0..1.0)) * eta.eta();
        acc += quantile_fn(u);
    }
    Ok(acc / cast::<T>(n as f64))
}

/// Distorted expectation: the mean of the quantile function evaluated at
/// beta(tau) for tau ~ U([0,1]). beta must map into [0,1].
pub fn distorted_value<T, B, R>(
    dist: &EmpiricalDistribution<T>,
    beta: B,
    n: usize,
    rng: &mut R,
) -> Result<T>
where
    T: Scalar,
    B: Fn(T) -> T,
    R: Rng,
{
    if n == 0 {
        return Err(Error::Contract("need at least one fraction sample".into()));
    }
    let mut acc = T::zero();
    for _ in 0..n {
        let tau = cast::<T>(rng.gen_range(0.0..1.0));
        let b = beta(tau);
        if b < T::zero() || b > T::one() {
            return Err(Error::Contract(format!(
                "distortion output {b} outside [0,1] at tau {tau}"
            )));
        }
        acc += dist.quantile_clamped(b);
    }
    Ok(acc / cast::<T>(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_to_ten() -> EmpiricalDistribution<f64> {
        EmpiricalDistribution::from_samples(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0])
            .unwrap()
    }

    fn two_point() -> EmpiricalDistribution<f64> {
        EmpiricalDistribution::from_weighted(vec![(0.0, 0.5), (10.0, 0.5)]).unwrap()
    }

    #[test]
    fn cvar_distort_values() {
        let eta = RiskLevel::new(0.5).unwrap();
        assert_eq!(cvar_distort(0.6, eta), 0.3);
        assert_eq!(cvar_distort(0.0, eta), 0.0);
        let neutral = RiskLevel::neutral();
        assert_eq!(cvar_distort(0.77, neutral), 0.77);
    }

    #[test]
    fn risk_level_bounds() {
        assert!(RiskLevel::new(0.0).is_err());
        assert!(RiskLevel::new(1.5).is_err());
        assert!(RiskLevel::new(1.0).is_ok());
    }

    #[test]
    fn cvar_bottom_half_of_uniform_ten() {
        let d = one_to_ten();
        let c = d.cvar(RiskLevel::new(0.5).unwrap());
        assert!((c - 3.0).abs() < 1e-12, "got {c}");
    }

    #[test]
    fn cvar_one_is_mean() {
        let d = one_to_ten();
        assert!((d.cvar(RiskLevel::neutral()) - 5.5).abs() < 1e-12);
    }

    #[test]
    fn cvar_point_mass() {
        let d = EmpiricalDistribution::from_samples(&[4.25f64]).unwrap();
        for eta in [0.05, 0.3, 1.0] {
            assert!((d.cvar(RiskLevel::new(eta).unwrap()) - 4.25).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_at_inf_definition() {
        let d = two_point();
        assert_eq!(d.quantile_at(0.25).unwrap(), 0.0);
        assert_eq!(d.quantile_at(0.5).unwrap(), 0.0);
        assert_eq!(d.quantile_at(0.75).unwrap(), 10.0);
        let pm = EmpiricalDistribution::from_samples(&[7.0]).unwrap();
        assert_eq!(pm.quantile_at(0.01).unwrap(), 7.0);
        assert_eq!(pm.quantile_at(1.0).unwrap(), 7.0);
    }

    #[test]
    fn quantile_at_rejects_out_of_range_tau() {
        let d = two_point();
        assert!(d.quantile_at(0.0).is_err());
        assert!(d.quantile_at(1.1).is_err());
    }

    #[test]
    fn empty_distribution_is_contract_error() {
        assert!(matches!(
            EmpiricalDistribution::<f64>::from_weighted(vec![]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn iqr_values() {
        assert!((two_point().iqr() - 10.0).abs() < 1e-12);
        let pm = EmpiricalDistribution::from_samples(&[3.0]).unwrap();
        assert_eq!(pm.iqr(), 0.0);
        let hundred: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let d = EmpiricalDistribution::from_samples(&hundred).unwrap();
        // 75th minus 25th order statistic under the inf-definition.
        assert_eq!(d.iqr(), 75.0 - 25.0);
    }

    #[test]
    fn distorted_value_identity_is_mean() {
        let d = one_to_ten();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = distorted_value(&d, |t| t, 200_000, &mut rng).unwrap();
        assert!((v - 5.5).abs() < 0.05, "got {v}");
    }

    #[test]
    fn distorted_value_halving_matches_exact_cvar() {
        let d = one_to_ten();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v = distorted_value(&d, |t| 0.5 * t, 200_000, &mut rng).unwrap();
        assert!((v - 3.0).abs() < 0.05, "got {v}");
    }

    #[test]
    fn distorted_value_constant_is_quantile() {
        let d = one_to_ten();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let v = distorted_value(&d, |_| 0.5, 100, &mut rng).unwrap();
        assert_eq!(v, d.quantile_at(0.5).unwrap());
    }

    #[test]
    fn distorted_value_rejects_bad_distortion() {
        let d = one_to_ten();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        assert!(matches!(
            distorted_value(&d, |_| 1.5, 10, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn sampled_cvar_agrees_with_exact() {
        let d = one_to_ten();
        let eta = RiskLevel::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let approx =
            cvar_value_sampled(|u| d.quantile_clamped(u), eta, 200_000, &mut rng).unwrap();
        assert!((approx - 3.0).abs() < 0.05, "got {approx}");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_dist() -> impl Strategy<Value = EmpiricalDistribution<f64>> {
            prop::collection::vec((-100.0..100.0f64, 0.01..1.0f64), 1..40)
                .prop_map(|atoms| EmpiricalDistribution::from_weighted(atoms).unwrap())
        }

        proptest! {
            #[test]
            fn cvar_monotone_in_eta(d in arb_dist(), e1 in 0.01..1.0f64, e2 in 0.01..1.0f64) {
                let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
                let c_lo = d.cvar(RiskLevel::new(lo).unwrap());
                let c_hi = d.cvar(RiskLevel::new(hi).unwrap());
                prop_assert!(c_lo <= c_hi + 1e-9, "cvar({lo})={c_lo} > cvar({hi})={c_hi}");
            }

            #[test]
            fn cvar_translation_and_scale_equivariant(
                d in arb_dist(),
                shift in -50.0..50.0f64,
                lambda in 0.01..10.0f64,
                eta in 0.01..1.0f64,
            ) {
                let eta = RiskLevel::new(eta).unwrap();
                let base = d.cvar(eta);
                let shifted = EmpiricalDistribution::from_weighted(
                    d.atoms().into_iter().map(|(v, w)| (v + shift, w)).collect()
                ).unwrap();
                prop_assert!((shifted.cvar(eta) - (base + shift)).abs() < 1e-8);
                let scaled = EmpiricalDistribution::from_weighted(
                    d.atoms().into_iter().map(|(v, w)| (v * lambda, w)).collect()
                ).unwrap();
                prop_assert!((scaled.cvar(eta) - base * lambda).abs() < 1e-7);
            }

            #[test]
            fn iqr_translation_invariant_scale_linear(
                d in arb_dist(),
                shift in -50.0..50.0f64,
                lambda in 0.01..10.0f64,
            ) {
                let base = d.iqr();
                let shifted = EmpiricalDistribution::from_weighted(
                    d.atoms().into_iter().map(|(v, w)| (v + shift, w)).collect()
                ).unwrap();
                prop_assert!((shifted.iqr() - base).abs() < 1e-8);
                let scaled = EmpiricalDistribution::from_weighted(
                    d.atoms().into_iter().map(|(v, w)| (v * lambda, w)).collect()
                ).unwrap();
                prop_assert!((scaled.iqr() - base * lambda).abs() < 1e-7);
            }

            #[test]
            fn quantile_nondecreasing(d in arb_dist(), t1 in 0.01..1.0f64, t2 in 0.01..1.0f64) {
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                prop_assert!(d.quantile_at(lo).unwrap() <= d.quantile_at(hi).unwrap());
            }

            #[test]
            fn cvar_one_equals_mean(d in arb_dist()) {
                prop_assert!((d.cvar(RiskLevel::neutral()) - d.mean()).abs() < 1e-9);
            }
        }
    }
}
