use crate::scalar::{cast, Scalar};
use crate::{Error, Result};

/// p-Wasserstein distance between two finite one-dimensional distributions,
/// given as sorted (value, mass) atoms with masses summing to one.
///
/// Computed by the quantile-function integral
/// ( int_0^1 |F1^{-1}(u) - F2^{-1}(u)|^p du )^{1/p},
/// which is exact for piecewise-constant inverse CDFs.
pub fn wasserstein_p<T: Scalar>(d1: &[(T, T)], d2: &[(T, T)], p: T) -> Result<T> {
    if p < T::one() {
        return Err(Error::Contract(format!("p must be >= 1, got {p}")));
    }
    if d1.is_empty() || d2.is_empty() {
        return Err(Error::Contract("wasserstein_p: empty distribution".into()));
    }
    for w in [d1, d2] {
        if w.windows(2).any(|ab| ab[0].0 > ab[1].0) {
            return Err(Error::Contract("wasserstein_p: atoms must be sorted".into()));
        }
    }

    let eps = cast::<T>(1e-12);
    let one = T::one();
    let mut i = 0usize;
    let mut j = 0usize;
    let mut c1 = d1[0].1;
    let mut c2 = d2[0].1;
    let mut prev = T::zero();
    let mut total = T::zero();
    while prev < one - eps {
        let u = c1.min(c2).min(one);
        let width = (u - prev).max(T::zero());
        total += width * (d1[i].0 - d2[j].0).abs().powf(p);
        prev = u;
        let adv1 = c1 <= u + eps;
        let adv2 = c2 <= u + eps;
        if adv1 {
            i += 1;
            if i < d1.len() {
                c1 += d1[i].1;
            } else {
                // Exhausted (possibly short of 1 by rounding): the last atom
                // carries the remaining width.
                i = d1.len() - 1;
                c1 = T::infinity();
            }
        }
        if adv2 {
            j += 1;
            if j < d2.len() {
                c2 += d2[j].1;
            } else {
                j = d2.len() - 1;
                c2 = T::infinity();
            }
        }
        if !adv1 && !adv2 {
            break;
        }
    }
    Ok(total.powf(one / p))
}
