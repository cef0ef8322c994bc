//! Tensor fields on a flat periodic lattice and the discrete Ebin inner product.
//!
//! Lattice points are numbered with axis 0 varying fastest:
//! `p = i_0 + N i_1 + N^2 i_2 + ...`, and the coordinate of index `i_a` is
//! `i_a * extent / N`.

pub mod codec;
mod noise;

use std::f64::consts::PI;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::stats::pairwise_sum;
use crate::tensor::{spd_guard, trace_chain, tr_g, SpdMat, SymMat, DEFAULT_SPD_FLOOR};

pub use noise::{make_basis_elementary, NoiseBasis};

pub type Coords = SmallVec<[f64; 4]>;

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    dim: usize,
    points_per_axis: usize,
    extent: f64,
}

impl Lattice {
    pub fn new(dim: usize, points_per_axis: usize, extent: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("lattice dimension must be positive"));
        }
        if points_per_axis == 0 {
            return Err(Error::contract("lattice needs at least one point per axis"));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::contract("lattice extent must be positive and finite"));
        }
        points_per_axis
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::contract("lattice point count overflows"))?;
        Ok(Self {
            dim,
            points_per_axis,
            extent,
        })
    }

    /// `N` points per axis on the default `[0, 2 pi)^n` torus.
    pub fn torus(dim: usize, points_per_axis: usize) -> Result<Self> {
        Self::new(dim, points_per_axis, 2.0 * PI)
    }

    /// One point carrying unit weight.
    pub fn single_point(dim: usize) -> Self {
        Self::new(dim, 1, 1.0).expect("valid single-point lattice")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn point_count(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.points_per_axis as f64
    }

    /// Quadrature weight of one lattice cell, `(extent / N)^n`.
    pub fn cell_weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn total_weight(&self) -> f64 {
        self.extent.powi(self.dim as i32)
    }

    pub fn multi_index(&self, mut p: usize) -> SmallVec<[usize; 4]> {
        let n = self.points_per_axis;
        (0..self.dim)
            .map(|_| {
                let i = p % n;
                p /= n;
                i
            })
            .collect()
    }

    pub fn coords(&self, p: usize) -> Coords {
        let h = self.spacing();
        self.multi_index(p).iter().map(|&i| i as f64 * h).collect()
    }

    /// Index of the point `offset` steps from `p` along `axis`, wrapping.
    pub fn shifted(&self, p: usize, axis: usize, offset: isize) -> usize {
        let n = self.points_per_axis as isize;
        let stride = self.points_per_axis.pow(axis as u32);
        let i = (p / stride) as isize % n;
        let j = (i + offset).rem_euclid(n);
        (p as isize + (j - i) * stride as isize) as usize
    }

    pub(crate) fn ensure_same(&self, other: &Lattice) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }
}

/// A field of symmetric matrices, one per lattice point.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    lattice: Lattice,
    values: Vec<SymMat>,
}

impl TensorField {
    pub fn from_values(lattice: Lattice, values: Vec<SymMat>) -> Result<Self> {
        Error::check_dim(lattice.point_count(), values.len())?;
        for v in &values {
            Error::check_dim(lattice.dim(), v.dim())?;
            if !v.is_finite() {
                return Err(Error::NonFinite("tensor field value"));
            }
        }
        Ok(Self { lattice, values })
    }

    pub fn constant(lattice: &Lattice, value: &SymMat) -> Self {
        assert_eq!(lattice.dim(), value.dim(), "matrix and lattice dimension differ");
        Self {
            values: vec![value.clone(); lattice.point_count()],
            lattice: lattice.clone(),
        }
    }

    pub fn zeros(lattice: &Lattice) -> Self {
        Self::constant(lattice, &SymMat::zeros(lattice.dim()))
    }

    pub fn from_fn(lattice: &Lattice, mut f: impl FnMut(&[f64]) -> SymMat) -> Result<Self> {
        let values = (0..lattice.point_count()).map(|p| f(&lattice.coords(p))).collect();
        Self::from_values(lattice.clone(), values)
    }

    pub(crate) fn from_values_unchecked(lattice: Lattice, values: Vec<SymMat>) -> Self {
        debug_assert_eq!(lattice.point_count(), values.len());
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[SymMat] {
        &self.values
    }

    pub fn at(&self, p: usize) -> &SymMat {
        &self.values[p]
    }

    pub fn map(&self, f: impl FnMut(&SymMat) -> SymMat) -> Self {
        Self {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v.scale(c))
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &TensorField) -> Result<()> {
        self.lattice.ensure_same(&other.lattice)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.axpy(c, b);
        }
        Ok(())
    }

    /// `sum_k c_k * fields_k`, all on one lattice.
    pub fn linear_combination(terms: &[(f64, &TensorField)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::contract("empty linear combination"))?;
        let mut out = TensorField::zeros(first.lattice());
        for (c, f) in terms {
            out.axpy(*c, f)?;
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }

    pub fn max_abs_diff(&self, other: &TensorField) -> Result<f64> {
        self.lattice.ensure_same(&other.lattice)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).max_abs())))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(SymMat::is_zero)
    }
}

/// A field of positive-definite metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    lattice: Lattice,
    values: Vec<SpdMat>,
    floor: f64,
}

impl MetricField {
    /// Certifies every point of `field` with [`spd_guard`].
    pub fn new(field: &TensorField, floor: f64) -> Result<Self> {
        let values = field
            .values
            .iter()
            .enumerate()
            .map(|(p, m)| spd_guard(m, floor).map_err(|e| e.at_point(p)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lattice: field.lattice.clone(),
            values,
            floor,
        })
    }

    pub fn from_tensor(field: &TensorField) -> Result<Self> {
        Self::new(field, DEFAULT_SPD_FLOOR)
    }

    pub fn constant(lattice: &Lattice, value: &SymMat) -> Result<Self> {
        Self::from_tensor(&TensorField::constant(lattice, value))
    }

    pub fn identity(lattice: &Lattice) -> Self {
        Self::constant(lattice, &SymMat::identity(lattice.dim())).expect("identity is SPD")
    }

    /// Same floor as `self`, new values.
    pub fn recertify(&self, field: &TensorField) -> Result<Self> {
        self.lattice.ensure_same(field.lattice())?;
        Self::new(field, self.floor)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[SpdMat] {
        &self.values
    }

    pub fn at(&self, p: usize) -> &SpdMat {
        &self.values[p]
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn to_tensor(&self) -> TensorField {
        TensorField {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|g| g.base().clone()).collect(),
        }
    }

    /// Riemannian volume `sum_p sqrt(det g_p) * cell_weight`.
    pub fn volume(&self) -> f64 {
        let w = self.lattice.cell_weight();
        let terms: Vec<f64> = self.values.iter().map(|g| g.sqrt_det() * w).collect();
        pairwise_sum(&terms)
    }
}

/// A vector field, `dim` real components per lattice point.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    lattice: Lattice,
    components: Vec<f64>,
}

impl VectorField {
    pub fn from_fn(lattice: &Lattice, mut f: impl FnMut(&[f64]) -> Coords) -> Result<Self> {
        let n = lattice.dim();
        let mut components = Vec::with_capacity(n * lattice.point_count());
        for p in 0..lattice.point_count() {
            let v = f(&lattice.coords(p));
            Error::check_dim(n, v.len())?;
            components.extend_from_slice(&v);
        }
        Ok(Self {
            lattice: lattice.clone(),
            components,
        })
    }

    pub fn zeros(lattice: &Lattice) -> Self {
        Self {
            lattice: lattice.clone(),
            components: vec![0.0; lattice.dim() * lattice.point_count()],
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn component(&self, p: usize, c: usize) -> f64 {
        self.components[p * self.lattice.dim() + c]
    }
}

/// Discrete `int tr_g(h x k) vol(g)` as a Riemann sum over the lattice.
pub fn ebin_inner(g: &MetricField, h: &TensorField, k: &TensorField) -> Result<f64> {
    g.lattice.ensure_same(&h.lattice)?;
    g.lattice.ensure_same(&k.lattice)?;
    let w = g.lattice.cell_weight();
    let terms = g
        .values
        .iter()
        .zip(h.values.iter().zip(&k.values))
        .map(|(gp, (hp, kp))| Ok(trace_chain(gp, &[hp.clone(), kp.clone()])? * gp.sqrt_det() * w))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms))
}

/// Splits `h` into its `g`-traceless part and its conformal part `f g`,
/// with `f = tr_g(h) / n` pointwise.
pub fn project_v0_v1(g: &MetricField, h: &TensorField) -> Result<(TensorField, TensorField)> {
    g.lattice.ensure_same(&h.lattice)?;
    let n = g.lattice.dim() as f64;
    let mut traceless = Vec::with_capacity(h.values.len());
    let mut conformal = Vec::with_capacity(h.values.len());
    for (gp, hp) in g.values.iter().zip(&h.values) {
        let f = tr_g(gp, hp)? / n;
        let c = gp.base().scale(f);
        traceless.push(hp - &c);
        conformal.push(c);
    }
    Ok((
        TensorField::from_values_unchecked(g.lattice.clone(), traceless),
        TensorField::from_values_unchecked(g.lattice.clone(), conformal),
    ))
}

/// Fourth-order periodic central difference of a scalar sampled on the
/// lattice, along `axis`, at point `p`.
fn central_diff(lattice: &Lattice, p: usize, axis: usize, f: impl Fn(usize) -> f64) -> f64 {
    let h = lattice.spacing();
    let fp1 = f(lattice.shifted(p, axis, 1));
    let fm1 = f(lattice.shifted(p, axis, -1));
    let fp2 = f(lattice.shifted(p, axis, 2));
    let fm2 = f(lattice.shifted(p, axis, -2));
    (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h)
}

/// `(L_X g)_ab = X^c d_c g_ab + g_cb d_a X^c + g_ac d_b X^c`.
pub fn lie_derivative_metric(x: &VectorField, g: &MetricField) -> Result<TensorField> {
    x.lattice.ensure_same(&g.lattice)?;
    let lat = &g.lattice;
    let n = lat.dim();
    if lat.points_per_axis() < 4 {
        return Err(Error::contract(
            "Lie derivative stencil needs at least 4 points per axis",
        ));
    }
    let values = (0..lat.point_count())
        .map(|p| {
            let gp = g.values[p].base();
            // dx[c][a] = d_a X^c
            let dx: Vec<Vec<f64>> = (0..n)
                .map(|c| (0..n).map(|a| central_diff(lat, p, a, |q| x.component(q, c))).collect())
                .collect();
            SymMat::from_fn(n, |a, b| {
                let mut v = 0.0;
                for c in 0..n {
                    let dg = central_diff(lat, p, c, |q| g.values[q].base().get(a, b));
                    v += x.component(p, c) * dg;
                    v += gp.get(c, b) * dx[c][a];
                    v += gp.get(a, c) * dx[c][b];
                }
                v
            })
        })
        .collect();
    Ok(TensorField::from_values_unchecked(lat.clone(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    #[test]
    fn lattice_weights_and_wrapping() {
        let lat = Lattice::new(3, 4, 2.0).unwrap();
        assert_eq!(lat.point_count(), 64);
        assert_eq!(lat.cell_weight(), 0.125);
        assert_eq!(lat.cell_weight() * lat.point_count() as f64, lat.total_weight());
        assert_eq!(lat.shifted(0, 0, -1), 3);
        assert_eq!(lat.shifted(0, 1, -1), 12);
        assert_eq!(lat.shifted(0, 2, 5), 16);
        assert_eq!(lat.multi_index(lat.shifted(21, 1, 2)).as_slice(), &[1, 3, 1]);
        assert!(Lattice::new(3, 0, 1.0).is_err());
        assert!(Lattice::new(3, 2, -1.0).is_err());
    }

    #[test]
    fn ebin_inner_single_point_examples() {
        let lat = Lattice::single_point(3);
        let i = TensorField::constant(&lat, &SymMat::identity(3));
        let g = MetricField::identity(&lat);
        assert_eq!(ebin_inner(&g, &i, &i).unwrap(), 3.0);

        let g4 = MetricField::constant(&lat, &SymMat::scaled_identity(3, 4.0)).unwrap();
        assert_eq!(ebin_inner(&g4, &i, &i).unwrap(), 1.5);

        let h = TensorField::constant(&lat, &SymMat::diag(&[1., -1., 0.]));
        assert_eq!(ebin_inner(&g, &h, &i).unwrap(), 0.0);
    }

    #[test]
    fn ebin_inner_rejects_mismatched_lattices() {
        let a = Lattice::single_point(3);
        let b = Lattice::torus(3, 2).unwrap();
        let g = MetricField::identity(&a);
        let h = TensorField::zeros(&b);
        assert_eq!(ebin_inner(&g, &h, &h), Err(Error::LatticeMismatch));
    }

    #[test]
    fn projection_examples() {
        let lat = Lattice::single_point(3);
        let g = MetricField::identity(&lat);
        let (h0, c) = project_v0_v1(&g, &g.to_tensor()).unwrap();
        assert!(h0.is_zero());
        assert_eq!(c, g.to_tensor());

        let h = TensorField::constant(&lat, &SymMat::diag(&[1., -1., 0.]));
        let (h0, c) = project_v0_v1(&g, &h).unwrap();
        assert_eq!(h0, h);
        assert!(c.is_zero());

        let h = TensorField::constant(&lat, &SymMat::diag(&[1., 2., 3.]));
        let (h0, c) = project_v0_v1(&g, &h).unwrap();
        assert_eq!(h0.at(0), &SymMat::diag(&[-1., 0., 1.]));
        assert_eq!(c.at(0), &SymMat::scaled_identity(3, 2.0));
    }

    #[test]
    fn lie_derivative_trivial_cases() {
        let lat = Lattice::torus(3, 6).unwrap();
        let g = MetricField::identity(&lat);
        assert!(lie_derivative_metric(&VectorField::zeros(&lat), &g).unwrap().is_zero());
        let x = VectorField::from_fn(&lat, |_| smallvec![0.3, -1.0, 2.0]).unwrap();
        assert!(lie_derivative_metric(&x, &g).unwrap().max_abs() < 1e-14);

        let small = Lattice::torus(3, 3).unwrap();
        let g = MetricField::identity(&small);
        assert!(lie_derivative_metric(&VectorField::zeros(&small), &g).is_err());
    }

    #[test]
    fn lie_derivative_of_flat_metric_along_sine() {
        let lat = Lattice::torus(3, 16).unwrap();
        let g = MetricField::identity(&lat);
        let x = VectorField::from_fn(&lat, |c| smallvec![c[0].sin(), 0.0, 0.0]).unwrap();
        let l = lie_derivative_metric(&x, &g).unwrap();
        for p in 0..lat.point_count() {
            let c = lat.coords(p);
            let want = SymMat::diag(&[2.0 * c[0].cos(), 0.0, 0.0]);
            assert!((l.at(p) - &want).max_abs() < 2e-3);
        }
    }
}
