//! Central finite-difference checks against the tape's backward pass.

use crate::mat::Mat;
use crate::scalar::{cast, Scalar};
use crate::tape::{Tape, VarId};
use crate::{Error, Result};

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport<T> {
    pub max_rel_err: T,
    /// (parameter index, flat entry index) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub passed: bool,
    pub coords_checked: usize,
}

/// Compare backward gradients against central finite differences.
///
/// `build_loss` constructs the scalar loss on a fresh tape from parameter
/// nodes registered in the order of `params`. Every coordinate of every
/// parameter is perturbed by `eps`; relative error uses a small floor so
/// zero-gradient coordinates compare cleanly.
pub fn gradient_check<T, F>(
    params: &[Mat<T>],
    build_loss: F,
    eps: T,
    tol: T,
) -> Result<GradCheckReport<T>>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[VarId]) -> Result<VarId>,
{
    if eps <= T::zero() {
        return Err(Error::Contract(format!("eps must be > 0, got {eps}")));
    }

    let eval = |ps: &[Mat<T>]| -> Result<T> {
        let mut tape = Tape::new();
        let ids: Vec<VarId> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = build_loss(&mut tape, &ids)?;
        tape.value(loss).scalar()
    };

    // Analytic gradients.
    let mut tape = Tape::new();
    let ids: Vec<VarId> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build_loss(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;
    let analytic = grads.param_grads(&tape);

    let floor = cast::<T>(1e-8);
    let mut max_rel_err = T::zero();
    let mut worst = None;
    let mut coords = 0usize;
    let mut work: Vec<Mat<T>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.len() {
            let orig = p.data()[k];
            work[pi].data_mut()[k] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[k] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let fd = (up - down) / (cast::<T>(2.0) * eps);
            let ad = analytic[pi].data()[k];
            let denom = ad.abs().max(fd.abs()).max(floor);
            let rel = (ad - fd).abs() / denom;
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((pi, k));
            }
            coords += 1;
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst,
        passed: max_rel_err < tol,
        coords_checked: coords,
    })
}
