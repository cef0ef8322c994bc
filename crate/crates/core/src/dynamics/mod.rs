//! Time integration on the space of metrics.

mod deterministic;
mod stochastic;

pub use deterministic::{
    correction_l, correction_l_at, el_rhs, el_rhs_at, geodesic_rhs, geodesic_rhs_at, integrate_el,
    integrate_geodesic,
};
pub use stochastic::{
    inverse_sde_coeffs, simulate_metric_sde, volume_ito_coeffs, DriftRule, InverseSdeCoeffs, SdeSample,
    SpdExit, VolumeItoCoeffs,
};

pub(crate) use stochastic::inverse_coeffs_from_inverse;

use crate::error::{Error, Result};
use crate::field::TensorField;

/// Uniform grid `t_j = a + j dt` on `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    a: f64,
    b: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(a: f64, b: f64, steps: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::contract("time grid needs finite a < b"));
        }
        if steps == 0 {
            return Err(Error::contract("time grid needs at least one step"));
        }
        Ok(Self { a, b, steps })
    }

    /// Grid with step `dt`, which must divide `b - a` up to rounding.
    pub fn with_dt(a: f64, b: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::contract("dt must be positive"));
        }
        let ratio = (b - a) / dt;
        let steps = ratio.round();
        if !(steps >= 1.0) || (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::contract(format!(
                "dt = {dt} does not divide the interval [{a}, {b}]"
            )));
        }
        Self::new(a, b, steps as usize)
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.b - self.a) / self.steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.steps {
            self.b
        } else {
            self.a + j as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|j| self.time(j))
    }

    /// The grid with `factor` times fewer steps.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::contract(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps
            )));
        }
        Self::new(self.a, self.b, self.steps / factor)
    }
}

/// One tensor field per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct TimePath {
    grid: TimeGrid,
    samples: Vec<TensorField>,
}

impl TimePath {
    pub fn new(grid: TimeGrid, samples: Vec<TensorField>) -> Result<Self> {
        Error::check_dim(grid.steps() + 1, samples.len())?;
        let lattice = samples[0].lattice();
        for s in &samples[1..] {
            lattice.ensure_same(s.lattice())?;
        }
        Ok(Self { grid, samples })
    }

    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64) -> TensorField) -> Result<Self> {
        let samples = grid.times().map(&mut f).collect();
        Self::new(grid, samples)
    }

    /// The same field at every grid point.
    pub fn constant(grid: TimeGrid, field: &TensorField) -> Self {
        Self {
            grid,
            samples: vec![field.clone(); grid.steps() + 1],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[TensorField] {
        &self.samples
    }

    pub fn at(&self, j: usize) -> &TensorField {
        &self.samples[j]
    }

    pub fn first(&self) -> &TensorField {
        &self.samples[0]
    }

    pub fn last(&self) -> &TensorField {
        &self.samples[self.samples.len() - 1]
    }

    pub fn lattice(&self) -> &crate::field::Lattice {
        self.samples[0].lattice()
    }

    /// Pointwise `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &TimePath) -> Result<TimePath> {
        if self.grid != other.grid {
            return Err(Error::contract("time paths live on different grids"));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| {
                let mut out = a.clone();
                out.axpy(c, b)?;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: self.grid,
            samples,
        })
    }

    /// `V(a) = V(b) = 0` exactly.
    pub fn vanishes_at_ends(&self) -> bool {
        self.first().is_zero() && self.last().is_zero()
    }

    /// Time derivative by second-order central differences, one-sided
    /// second-order stencils at the two endpoints.
    pub fn time_derivative(&self) -> Result<TimePath> {
        let m = self.grid.steps();
        if m < 2 {
            return Err(Error::contract("time derivative needs at least two steps"));
        }
        let h = self.grid.dt();
        let s = &self.samples;
        let mut out = Vec::with_capacity(m + 1);
        out.push(TensorField::linear_combination(&[
            (-1.5 / h, &s[0]),
            (2.0 / h, &s[1]),
            (-0.5 / h, &s[2]),
        ])?);
        for j in 1..m {
            out.push(TensorField::linear_combination(&[
                (0.5 / h, &s[j + 1]),
                (-0.5 / h, &s[j - 1]),
            ])?);
        }
        out.push(TensorField::linear_combination(&[
            (1.5 / h, &s[m]),
            (-2.0 / h, &s[m - 1]),
            (0.5 / h, &s[m - 2]),
        ])?);
        Ok(Self {
            grid: self.grid,
            samples: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Lattice;
    use crate::tensor::SymMat;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::with_dt(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 1000);
        assert_eq!(g.time(1000), 1.0);
        assert!(TimeGrid::with_dt(0.0, 1.0, 0.3).is_err());
        assert!(TimeGrid::new(1.0, 0.0, 4).is_err());
        assert_eq!(g.coarsened(8).unwrap().steps(), 125);
        assert!(g.coarsened(7).is_err());
    }

    #[test]
    fn derivative_is_exact_on_quadratics() {
        let lat = Lattice::single_point(2);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let path = TimePath::from_fn(grid, |t| {
            TensorField::constant(&lat, &SymMat::from_upper(2, &[t * t, 1.0 - t, 3.0]).unwrap())
        })
        .unwrap();
        let d = path.time_derivative().unwrap();
        for (j, t) in grid.times().enumerate() {
            let v = d.at(j).at(0);
            assert!((v.get(0, 0) - 2.0 * t).abs() < 1e-12);
            assert!((v.get(0, 1) + 1.0).abs() < 1e-12);
            assert!(v.get(1, 1).abs() < 1e-12);
        }
    }
}
