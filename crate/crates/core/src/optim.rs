//! First-order optimizer with moment tracking.

use crate::mat::Mat;
use crate::scalar::{cast, Scalar};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            lr: cast(1e-3),
            beta1: cast(0.9),
            beta2: cast(0.999),
            eps: cast(1e-8),
        }
    }
}

/// Moment estimates, one pair per parameter matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Vec<Mat<T>>,
    pub v: Vec<Mat<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[&Mat<T>]) -> Self {
        AdamState {
            m: params.iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect(),
            step: 0,
        }
    }
}

/// What happened during one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepReport {
    /// False when the update was rejected (non-finite gradients).
    pub applied: bool,
    /// Number of non-finite gradient entries found.
    pub non_finite: usize,
}

/// One bias-corrected moment-tracked update, in place. Gradients with any
/// non-finite entry reject the whole update and report it; moments and the
/// step counter are left untouched in that case.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Mat<T>],
    grads: &[Mat<T>],
    cfg: &AdamConfig<T>,
    state: &mut AdamState<T>,
) -> Result<StepReport> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam_step: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in params.iter().zip(grads.iter()) {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "adam_step: param {:?} vs grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    let non_finite: usize = grads
        .iter()
        .map(|g| g.data().iter().filter(|x| !x.is_finite()).count())
        .sum();
    if non_finite > 0 {
        return Ok(StepReport {
            applied: false,
            non_finite,
        });
    }

    state.step += 1;
    let t = cast::<T>(state.step as f64);
    let bc1 = T::one() - cfg.beta1.powf(t);
    let bc2 = T::one() - cfg.beta2.powf(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..g.len() {
            let gi = g.data()[i];
            let mi = cfg.beta1 * m.data()[i] + (T::one() - cfg.beta1) * gi;
            let vi = cfg.beta2 * v.data()[i] + (T::one() - cfg.beta2) * gi * gi;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let mhat = mi / bc1;
            let vhat = vi / bc2;
            p.data_mut()[i] = p.data()[i] - cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(StepReport {
        applied: true,
        non_finite: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AdamConfig<f64> {
        AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = Mat::row(&[1.0, -2.0]);
        let g = Mat::zeros(1, 2);
        let mut st = AdamState::new(&[&p]);
        // Seed non-zero moments so decay is observable.
        st.m[0] = Mat::row(&[0.4, 0.4]);
        st.v[0] = Mat::row(&[0.2, 0.2]);
        let before = p.clone();
        adam_step(&mut [&mut p], &[g], &cfg(), &mut st).unwrap();
        // m decays by beta1 but mhat/(sqrt(vhat)+eps) is not exactly zero,
        // so only check the moment decay and that the drift is tiny.
        assert!((st.m[0].data()[0] - 0.36).abs() < 1e-12);
        assert!((st.v[0].data()[0] - 0.1998).abs() < 1e-12);
        for (a, b) in p.data().iter().zip(before.data()) {
            assert!((a - b).abs() < 0.2);
        }
    }

    #[test]
    fn zero_gradient_fresh_state_is_identity() {
        let mut p = Mat::row(&[1.0, -2.0]);
        let g = Mat::zeros(1, 2);
        let mut st = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &[g], &cfg(), &mut st).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_is_bias_corrected_signed_lr() {
        // With fresh moments, step 1 gives delta = -lr * g / (|g| + eps').
        let mut p = Mat::row(&[0.0]);
        let g = Mat::row(&[3.0]);
        let c = cfg();
        let mut st = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &[g.clone()], &c, &mut st).unwrap();
        // mhat = g, vhat = g^2 -> delta = -lr * g/(|g| + eps) ~ -lr * sign(g)
        let expect = -c.lr * 3.0 / (3.0 + c.eps);
        assert!((p.data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn two_identical_steps_match_hand_recursion() {
        let mut p = Mat::row(&[1.0]);
        let g = Mat::row(&[2.0]);
        let c = cfg();
        let mut st = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &[g.clone()], &c, &mut st).unwrap();
        adam_step(&mut [&mut p], &[g.clone()], &c, &mut st).unwrap();

        // Oracle: replay the update rule directly.
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);
        let (mut m, mut v, mut x) = (0.0, 0.0, 1.0);
        for t in 1..=2u32 {
            m = b1 * m + (1.0 - b1) * 2.0;
            v = b2 * v + (1.0 - b2) * 4.0;
            let mhat = m / (1.0 - b1f64(b1, t));
            let vhat = v / (1.0 - b1f64(b2, t));
            x -= lr * mhat / (vhat.sqrt() + eps);
        }
        assert!((p.data()[0] - x).abs() < 1e-12, "{} vs {}", p.data()[0], x);
        assert!((st.m[0].data()[0] - m).abs() < 1e-12);
        assert!((st.v[0].data()[0] - v).abs() < 1e-12);
    }

    fn b1f64(b: f64, t: u32) -> f64 {
        b.powi(t as i32)
    }

    #[test]
    fn non_finite_gradient_rejects_update() {
        let mut p = Mat::row(&[1.0]);
        let g = Mat::row(&[f64::INFINITY]);
        let mut st = AdamState::new(&[&p]);
        let r = adam_step(&mut [&mut p], &[g], &cfg(), &mut st).unwrap();
        assert!(!r.applied);
        assert_eq!(r.non_finite, 1);
        assert_eq!(p.data(), &[1.0]);
        assert_eq!(st.step, 0);
    }
}
