use super::categorical::{CategoricalDist, Grid};
use super::mdp::{FiniteMdp, TabularPolicy};
use crate::scalar::{cast, Scalar};
use crate::{Error, Result};
use rand::Rng;

/// One application of the distributional Bellman operator under a fixed
/// policy: for each state, the pushforward mixture over actions, landing
/// states, and reward atoms of `reward + gamma * Z(next)`, projected back
/// onto the grid by linear interpolation.
///
/// On support overflow the backup retries once on a grid widened to the
/// MDP's return bounds, so the output may live on a different grid.
pub fn distributional_bellman_backup<T: Scalar>(
    z: &[CategoricalDist<T>],
    policy: &TabularPolicy<T>,
    mdp: &FiniteMdp<T>,
) -> Result<Vec<CategoricalDist<T>>> {
    if z.len() != mdp.n_states() {
        return Err(Error::Shape(format!(
            "{} distributions for {} states",
            z.len(),
            mdp.n_states()
        )));
    }
    let grid = z[0].grid();
    if z.iter().any(|d| d.grid() != grid) {
        return Err(Error::Contract("all states must share one grid".into()));
    }
    match backup_on_grid(z, policy, mdp, grid) {
        Ok(out) => Ok(out),
        Err(Error::Numeric(_)) => {
            // Widen once to the theoretical envelope union the current grid.
            let (lo, hi) = mdp.return_bounds();
            let wide = Grid::new(lo.min(grid.min), hi.max(grid.max), grid.n)?;
            let z_wide: Vec<CategoricalDist<T>> = z
                .iter()
                .map(|d| d.reproject(wide))
                .collect::<Result<_>>()?;
            backup_on_grid(&z_wide, policy, mdp, wide)
        }
        Err(e) => Err(e),
    }
}

fn backup_on_grid<T: Scalar>(
    z: &[CategoricalDist<T>],
    policy: &TabularPolicy<T>,
    mdp: &FiniteMdp<T>,
    grid: Grid<T>,
) -> Result<Vec<CategoricalDist<T>>> {
    let gamma = mdp.gamma();
    let mut out = Vec::with_capacity(z.len());
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) {
            out.push(CategoricalDist::point_mass(grid, T::zero())?);
            continue;
        }
        let mut acc = CategoricalDist::zero_on(grid);
        for a in 0..mdp.n_actions() {
            let pi = policy.prob(s, a);
            if pi == T::zero() {
                continue;
            }
            for o in mdp.outcomes(s, a) {
                let branch = pi * o.prob;
                if branch == T::zero() {
                    continue;
                }
                let next = &z[o.next];
                for &(rv, rp) in o.reward.atoms() {
                    let w_atom = branch * rp;
                    if w_atom == T::zero() {
                        continue;
                    }
                    for (k, &m) in next.masses().iter().enumerate() {
                        if m == T::zero() {
                            continue;
                        }
                        acc.deposit(rv + gamma * next.grid().value(k), w_atom * m)?;
                    }
                }
            }
        }
        acc.normalize();
        out.push(acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    pub n_atoms: usize,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            tol: cast(1e-6),
            max_iter: 10_000,
            n_atoms: 401,
        }
    }
}

/// Iterate the distributional backup to its fixed point: per-state return
/// distributions under the policy. Stops when the sup-state W1 change drops
/// below `tol`; errors with the residual if the iteration cap is exceeded.
///
/// `init` warm-starts the iteration (all on one grid covering the MDP's
/// return bounds); by default iteration starts from point masses at zero.
pub fn solve_return_distribution<T: Scalar>(
    mdp: &FiniteMdp<T>,
    policy: &TabularPolicy<T>,
    opts: &SolveOptions<T>,
    init: Option<Vec<CategoricalDist<T>>>,
) -> Result<Vec<CategoricalDist<T>>> {
    if opts.tol <= T::zero() {
        return Err(Error::Contract("tol must be > 0".into()));
    }
    let (lo, hi) = mdp.return_bounds();
    let grid = Grid::new(lo, hi, opts.n_atoms)?;
    let mut z = match init {
        Some(z0) => z0
            .into_iter()
            .map(|d| if d.grid() == grid { Ok(d) } else { d.reproject(grid) })
            .collect::<Result<Vec<_>>>()?,
        None => (0..mdp.n_states())
            .map(|_| CategoricalDist::point_mass(grid, T::zero()))
            .collect::<Result<Vec<_>>>()?,
    };
    let mut residual = T::infinity();
    for _ in 0..opts.max_iter {
        let next = distributional_bellman_backup(&z, policy, mdp)?;
        residual = T::zero();
        for (a, b) in z.iter().zip(next.iter()) {
            residual = residual.max(a.w1_same_grid(b)?);
        }
        z = next;
        if residual < opts.tol {
            return Ok(z);
        }
    }
    Err(Error::Numeric(format!(
        "distributional iteration hit the {} cap with residual {residual}",
        opts.max_iter
    )))
}

/// Contraction measurement: random distribution pairs on the MDP's grid, the
/// sup-state W1 before and after one backup. Feeds the contraction check
/// `after <= gamma * before + 2 * spacing`.
pub fn measure_contraction<T: Scalar, R: Rng>(
    mdp: &FiniteMdp<T>,
    policy: &TabularPolicy<T>,
    n_atoms: usize,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<(T, T)>> {
    let (lo, hi) = mdp.return_bounds();
    let grid = Grid::new(lo, hi, n_atoms)?;
    let random_z = |rng: &mut R| -> Result<Vec<CategoricalDist<T>>> {
        (0..mdp.n_states())
            .map(|_| {
                let mut masses = vec![T::zero(); grid.n];
                // Sparse random support keeps the distributions rough.
                for _ in 0..8 {
                    let k = rng.gen_range(0..grid.n);
                    masses[k] += cast::<T>(rng.gen_range(0.05..1.0));
                }
                let total: T = masses.iter().copied().sum();
                for m in &mut masses {
                    *m /= total;
                }
                CategoricalDist::new(grid, masses)
            })
            .collect()
    };
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let z1 = random_z(rng)?;
        let z2 = random_z(rng)?;
        let t1 = distributional_bellman_backup(&z1, policy, mdp)?;
        let t2 = distributional_bellman_backup(&z2, policy, mdp)?;
        let mut before = T::zero();
        let mut after = T::zero();
        for s in 0..mdp.n_states() {
            before = before.max(z1[s].w1_same_grid(&z2[s])?);
            after = after.max(t1[s].w1_same_grid(&t2[s])?);
        }
        out.push((before, after));
    }
    Ok(out)
}
