use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{lie_derivative_metric, Lattice, MetricField, TensorField, VectorField};
use crate::error::{Error, Result};
use crate::tensor::{traceless_part, SymMat};

/// Noise directions `H_i` with relative amplitudes `a_i`.
///
/// The process is driven by `sqrt(nu) * sum_i a_i H_i dW_i`, so direction `i`
/// carries the variance rate `nu_i = nu * a_i^2`. A single global `nu`
/// corresponds to all amplitudes equal to one.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseBasis {
    lattice: Lattice,
    elements: Vec<TensorField>,
    amplitudes: Vec<f64>,
    // scaled[p][i] = a_i * H_i(p)
    scaled: Vec<Vec<SymMat>>,
}

impl NoiseBasis {
    pub fn new(lattice: &Lattice, elements: Vec<TensorField>, amplitudes: Vec<f64>) -> Result<Self> {
        Error::check_dim(elements.len(), amplitudes.len())?;
        for e in &elements {
            lattice.ensure_same(e.lattice())?;
        }
        if let Some(a) = amplitudes.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::contract(format!(
                "noise amplitude {a} must be finite and nonnegative"
            )));
        }
        let scaled = (0..lattice.point_count())
            .map(|p| {
                elements
                    .iter()
                    .zip(&amplitudes)
                    .map(|(e, a)| e.at(p).scale(*a))
                    .collect()
            })
            .collect();
        Ok(Self {
            lattice: lattice.clone(),
            elements,
            amplitudes,
            scaled,
        })
    }

    /// Unit amplitudes on every element.
    pub fn uniform(lattice: &Lattice, elements: Vec<TensorField>) -> Result<Self> {
        let amplitudes = vec![1.0; elements.len()];
        Self::new(lattice, elements, amplitudes)
    }

    pub fn empty(lattice: &Lattice) -> Self {
        Self::uniform(lattice, Vec::new()).expect("empty basis is valid")
    }

    /// The single direction `g` itself, i.e. noise along the conformal ray.
    pub fn conformal(g: &MetricField) -> Self {
        Self::uniform(g.lattice(), vec![g.to_tensor()]).expect("conformal basis is valid")
    }

    /// `H_i = L_{X_i} g` for each vector field.
    pub fn lie(g: &MetricField, fields: &[VectorField]) -> Result<Self> {
        let elements = fields
            .iter()
            .map(|x| lie_derivative_metric(x, g))
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(g.lattice(), elements)
    }

    /// `g`-traceless parts of the elements of `basis`, same amplitudes.
    pub fn traceless(g: &MetricField, basis: &NoiseBasis) -> Result<Self> {
        g.lattice().ensure_same(&basis.lattice)?;
        let elements = basis
            .elements
            .iter()
            .map(|e| {
                let values = e
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(h, gp)| traceless_part(gp, h))
                    .collect::<Result<Vec<_>>>()?;
                TensorField::from_values(g.lattice().clone(), values)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(g.lattice(), elements, basis.amplitudes.clone())
    }

    /// `count` spatially constant directions with standard normal entries,
    /// projected onto their `g`-traceless parts.
    pub fn traceless_random(g: &MetricField, count: usize, seed: u64) -> Result<Self> {
        let lattice = g.lattice();
        let n = lattice.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let elements = (0..count)
            .map(|_| {
                let m = SymMat::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                TensorField::constant(lattice, &m)
            })
            .collect();
        Self::traceless(g, &Self::uniform(lattice, elements)?)
    }

    pub fn with_amplitudes(&self, amplitudes: Vec<f64>) -> Result<Self> {
        Self::new(&self.lattice, self.elements.clone(), amplitudes)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[TensorField] {
        &self.elements
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// `a_i H_i(p)` for every element, the form all pointwise formulas consume.
    pub fn scaled_at(&self, p: usize) -> &[SymMat] {
        &self.scaled[p]
    }
}

/// The `n(n+1)/2` constant fields with ones at `(i, j)` and `(j, i)`.
pub fn make_basis_elementary(lattice: &Lattice, n: usize) -> Result<NoiseBasis> {
    Error::check_dim(lattice.dim(), n)?;
    let mut elements = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let mut m = SymMat::zeros(n);
            m.set(i, j, 1.0);
            elements.push(TensorField::constant(lattice, &m));
        }
    }
    NoiseBasis::uniform(lattice, elements)
}
