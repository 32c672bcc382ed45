use crate::risk::{cvar_from_atoms, RiskLevel};
use crate::scalar::{cast, Scalar};
use crate::{Error, Result};

/// Evenly spaced support for categorical distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    pub min: T,
    pub max: T,
    pub n: usize,
}

impl<T: Scalar> Grid<T> {
    pub fn new(min: T, max: T, n: usize) -> Result<Self> {
        if n < 2 || !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Contract(format!(
                "grid needs finite min < max and n >= 2, got [{min}, {max}] n={n}"
            )));
        }
        Ok(Grid { min, max, n })
    }

    #[inline]
    pub fn spacing(&self) -> T {
        (self.max - self.min) / cast::<T>((self.n - 1) as f64)
    }

    #[inline]
    pub fn value(&self, k: usize) -> T {
        self.min + self.spacing() * cast::<T>(k as f64)
    }
}

/// Probability masses on a fixed grid; the discrete carrier for return
/// distributions in the dynamic-programming oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist<T> {
    grid: Grid<T>,
    masses: Vec<T>,
}

impl<T: Scalar> CategoricalDist<T> {
    pub fn new(grid: Grid<T>, masses: Vec<T>) -> Result<Self> {
        if masses.len() != grid.n {
            return Err(Error::Shape(format!(
                "{} masses for grid of {}",
                masses.len(),
                grid.n
            )));
        }
        if masses.iter().any(|m| *m < T::zero()) {
            return Err(Error::Contract("masses must be nonnegative".into()));
        }
        let total: T = masses.iter().copied().sum();
        if (total - T::one()).abs() > cast(1e-10) {
            return Err(Error::Contract(format!(
                "masses sum to {total}, expected 1 within 1e-10"
            )));
        }
        Ok(CategoricalDist { grid, masses })
    }

    /// Point mass at `x`, split between the two neighboring atoms.
    pub fn point_mass(grid: Grid<T>, x: T) -> Result<Self> {
        let mut d = CategoricalDist {
            grid,
            masses: vec![T::zero(); grid.n],
        };
        d.deposit(x, T::one())
            .map_err(|_| Error::Contract(format!("point {x} outside grid [{}, {}]", grid.min, grid.max)))?;
        Ok(d)
    }

    pub fn grid(&self) -> Grid<T> {
        self.grid
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    /// Linear-interpolation projection of weight `w` at value `x` onto the
    /// grid. Fails when `x` lies strictly outside the support (beyond a tiny
    /// rounding slack).
    pub(crate) fn deposit(&mut self, x: T, w: T) -> Result<()> {
        let slack = self.grid.spacing() * cast::<T>(1e-9);
        if x < self.grid.min - slack || x > self.grid.max + slack {
            return Err(Error::Numeric(format!(
                "support overflow: {x} outside [{}, {}]",
                self.grid.min, self.grid.max
            )));
        }
        let pos = ((x - self.grid.min) / self.grid.spacing())
            .max(T::zero())
            .min(cast::<T>((self.grid.n - 1) as f64));
        let lo = pos.floor().to_usize().unwrap().min(self.grid.n - 1);
        let frac = pos - cast::<T>(lo as f64);
        self.masses[lo] += w * (T::one() - frac);
        if lo + 1 < self.grid.n {
            self.masses[lo + 1] += w * frac;
        }
        Ok(())
    }

    pub(crate) fn zero_on(grid: Grid<T>) -> Self {
        CategoricalDist {
            grid,
            masses: vec![T::zero(); grid.n],
        }
    }

    pub(crate) fn normalize(&mut self) {
        let total: T = self.masses.iter().copied().sum();
        if total > T::zero() {
            for m in &mut self.masses {
                *m /= total;
            }
        }
    }

    pub fn mean(&self) -> T {
        self.masses
            .iter()
            .enumerate()
            .map(|(k, &m)| self.grid.value(k) * m)
            .sum()
    }

    /// Sorted (value, mass) pairs, zero-mass atoms dropped.
    pub fn atoms(&self) -> Vec<(T, T)> {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > T::zero())
            .map(|(k, &m)| (self.grid.value(k), m))
            .collect()
    }

    /// Exact CVaR via the shared inverse-CDF integral.
    pub fn cvar(&self, eta: RiskLevel<T>) -> Result<T> {
        cvar_from_atoms(&self.atoms(), eta)
    }

    /// Left-continuous inverse CDF.
    pub fn quantile_at(&self, tau: T) -> Result<T> {
        if tau <= T::zero() || tau > T::one() {
            return Err(Error::Contract(format!("tau must be in (0,1], got {tau}")));
        }
        let mut cum = T::zero();
        let slack = cast::<T>(1e-12);
        for (k, &m) in self.masses.iter().enumerate() {
            cum += m;
            if cum + slack >= tau {
                return Ok(self.grid.value(k));
            }
        }
        Ok(self.grid.max)
    }

    /// Reproject onto another grid (exact atom-by-atom interpolation).
    pub fn reproject(&self, grid: Grid<T>) -> Result<Self> {
        let mut out = CategoricalDist::zero_on(grid);
        for (k, &m) in self.masses.iter().enumerate() {
            if m > T::zero() {
                out.deposit(self.grid.value(k), m)?;
            }
        }
        out.normalize();
        Ok(out)
    }

    /// W1 distance to another distribution on the same grid:
    /// spacing * sum_k |CDF_1(k) - CDF_2(k)|.
    pub fn w1_same_grid(&self, other: &CategoricalDist<T>) -> Result<T> {
        if self.grid != other.grid {
            return Err(Error::Contract("w1_same_grid: grids differ".into()));
        }
        let mut c1 = T::zero();
        let mut c2 = T::zero();
        let mut acc = T::zero();
        for k in 0..self.grid.n {
            c1 += self.masses[k];
            c2 += other.masses[k];
            acc += (c1 - c2).abs();
        }
        Ok(acc * self.grid.spacing())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_on_atom_is_exact() {
        let g = Grid::new(0.0, 10.0, 11).unwrap();
        let d = CategoricalDist::point_mass(g, 3.0).unwrap();
        assert_eq!(d.masses()[3], 1.0);
        assert_eq!(d.mean(), 3.0);
    }

    #[test]
    fn point_mass_between_atoms_preserves_mean() {
        let g = Grid::new(0.0f64, 10.0, 11).unwrap();
        let d = CategoricalDist::point_mass(g, 3.25).unwrap();
        assert!((d.mean() - 3.25).abs() < 1e-12);
        assert!((d.masses()[3] - 0.75).abs() < 1e-12);
        assert!((d.masses()[4] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn point_mass_outside_grid_fails() {
        let g = Grid::new(0.0, 1.0, 3).unwrap();
        assert!(CategoricalDist::point_mass(g, 2.0).is_err());
    }

    #[test]
    fn quantile_and_cvar() {
        let g = Grid::new(0.0f64, 10.0, 11).unwrap();
        let mut masses = vec![0.0; 11];
        masses[0] = 0.5;
        masses[10] = 0.5;
        let d = CategoricalDist::new(g, masses).unwrap();
        assert_eq!(d.quantile_at(0.25).unwrap(), 0.0);
        assert_eq!(d.quantile_at(0.75).unwrap(), 10.0);
        let c = d.cvar(RiskLevel::new(0.5).unwrap()).unwrap();
        assert!((c - 0.0).abs() < 1e-12);
        assert!((d.cvar(RiskLevel::neutral()).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn w1_same_grid_simple() {
        let g = Grid::new(0.0f64, 10.0, 11).unwrap();
        let a = CategoricalDist::point_mass(g, 2.0).unwrap();
        let b = CategoricalDist::point_mass(g, 5.0).unwrap();
        assert!((a.w1_same_grid(&b).unwrap() - 3.0).abs() < 1e-12);
    }
}
