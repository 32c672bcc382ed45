use crate::scalar::{cast, Scalar};
use crate::{Error, Result};

/// Finite discrete reward law: (value, probability) atoms.
///
/// Probabilities must sum to one within 1e-12. Finite laws are all Eq. of
/// the reward schema needs: Bernoulli penalty terms convolve into finitely
/// many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw<T> {
    atoms: Vec<(T, T)>,
}

impl<T: Scalar> DiscreteLaw<T> {
    pub fn new(mut atoms: Vec<(T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Contract("law needs at least one atom".into()));
        }
        let total: T = atoms.iter().map(|(_, p)| *p).sum();
        if (total - T::one()).abs() > cast(1e-12) {
            return Err(Error::Contract(format!(
                "law probabilities sum to {total}, expected 1"
            )));
        }
        if atoms.iter().any(|(v, p)| !v.is_finite() || *p < T::zero()) {
            return Err(Error::Contract(
                "law needs finite values and nonnegative probabilities".into(),
            ));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(DiscreteLaw { atoms })
    }

    pub fn point_mass(value: T) -> Self {
        DiscreteLaw {
            atoms: vec![(value, T::one())],
        }
    }

    /// Penalty mixture of one Bernoulli risk term: `-weight` with
    /// probability `p`, else 0.
    pub fn bernoulli_penalty(weight: T, p: T) -> Result<Self> {
        if !(T::zero()..=T::one()).contains(&p) {
            return Err(Error::Contract(format!("bernoulli p must be in [0,1], got {p}")));
        }
        if p == T::zero() {
            return Ok(Self::point_mass(T::zero()));
        }
        if p == T::one() {
            return Ok(Self::point_mass(-weight));
        }
        DiscreteLaw::new(vec![(-weight, p), (T::zero(), T::one() - p)])
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn mean(&self) -> T {
        self.atoms.iter().map(|&(v, p)| v * p).sum()
    }

    pub fn min_value(&self) -> T {
        self.atoms[0].0
    }

    pub fn max_value(&self) -> T {
        self.atoms.last().unwrap().0
    }

    /// Shift every atom by a constant.
    pub fn shift(&self, c: T) -> Self {
        DiscreteLaw {
            atoms: self.atoms.iter().map(|&(v, p)| (v + c, p)).collect(),
        }
    }

    /// Law of the independent sum with another law.
    pub fn convolve(&self, other: &DiscreteLaw<T>) -> Self {
        let mut out: Vec<(T, T)> = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for &(v1, p1) in &self.atoms {
            for &(v2, p2) in &other.atoms {
                out.push((v1 + v2, p1 * p2));
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // Merge equal values.
        let mut merged: Vec<(T, T)> = Vec::with_capacity(out.len());
        for (v, p) in out {
            match merged.last_mut() {
                Some((lv, lp)) if *lv == v => *lp += p,
                _ => merged.push((v, p)),
            }
        }
        DiscreteLaw { atoms: merged }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_probabilities() {
        assert!(DiscreteLaw::new(vec![(1.0, 0.5), (2.0, 0.4)]).is_err());
        assert!(DiscreteLaw::new(vec![(1.0, 1.5), (2.0, -0.5)]).is_err());
    }

    #[test]
    fn bernoulli_penalty_mixture() {
        let law = DiscreteLaw::bernoulli_penalty(100.0f64, 0.1).unwrap();
        assert_eq!(law.atoms(), &[(-100.0, 0.1), (0.0, 0.9)]);
        assert!((law.mean() + 10.0).abs() < 1e-12);
    }

    #[test]
    fn convolve_step_cost_with_penalty() {
        let base = DiscreteLaw::point_mass(-0.01);
        let pen = DiscreteLaw::bernoulli_penalty(10.0, 0.2).unwrap();
        let law = base.convolve(&pen);
        assert_eq!(law.atoms(), &[(-10.01, 0.2), (-0.01, 0.8)]);
    }
}
