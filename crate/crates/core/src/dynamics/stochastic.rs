//! The additive-noise metric process `dg = sqrt(nu) sum_i a_i H_i dW_i + K dt`
//! and the Ito coefficients of `g^-1` and `vol(g)` along it.

use super::TimePath;
use crate::error::{Error, Result};
use crate::field::{MetricField, NoiseBasis, TensorField};
use crate::tensor::{min_eigenvalue, Mat, SpdMat, SymMat};
use crate::verify::SampleIncrements;

/// How the drift `int K dt` over one step is approximated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DriftRule {
    /// Euler-Maruyama: `K(t_j) dt`.
    LeftPoint,
    /// `(K(t_j) + K(t_{j+1})) dt / 2`. With additive noise the simulated
    /// marginals are then exact up to the `O(dt^2)` drift quadrature error.
    #[default]
    Trapezoid,
}

/// First grid point at which a simulated path left the SPD cone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdExit {
    pub step: usize,
    pub time: f64,
    pub point: usize,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug)]
pub struct SdeSample {
    pub path: TimePath,
    /// Certified metrics at every grid point, present iff the path never
    /// left the cone.
    pub metrics: Option<Vec<MetricField>>,
    pub spd_exit: Option<SpdExit>,
}

/// One Euler-Maruyama path of the metric process. Leaving the SPD cone is
/// recorded, not fatal.
pub fn simulate_metric_sde(
    g0: &MetricField,
    drift: &TimePath,
    basis: &NoiseBasis,
    nu: f64,
    dw: &SampleIncrements,
    rule: DriftRule,
) -> Result<SdeSample> {
    let lattice = g0.lattice();
    lattice.ensure_same(drift.lattice())?;
    lattice.ensure_same(basis.lattice())?;
    let grid = *drift.grid();
    if dw.steps() != grid.steps() || dw.basis_count() != basis.len() {
        return Err(Error::contract(format!(
            "increments are {}x{} but the basis has {} elements over {} steps",
            dw.basis_count(),
            dw.steps(),
            basis.len(),
            grid.steps()
        )));
    }
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::contract("nu must be finite and nonnegative"));
    }
    let sqrt_nu = nu.sqrt();
    let dt = grid.dt();
    let floor = g0.floor();

    let mut samples = Vec::with_capacity(grid.steps() + 1);
    let mut metrics = Some(Vec::with_capacity(grid.steps() + 1));
    let mut spd_exit = None;
    let mut current = g0.to_tensor();
    metrics.as_mut().unwrap().push(g0.clone());

    for j in 0..grid.steps() {
        let k_now = drift.at(j).values();
        let k_next = drift.at(j + 1).values();
        let next: Vec<SymMat> = current
            .values()
            .iter()
            .enumerate()
            .map(|(p, g)| {
                let mut v = g.clone();
                match rule {
                    DriftRule::LeftPoint => v.axpy(dt, &k_now[p]),
                    DriftRule::Trapezoid => {
                        v.axpy(0.5 * dt, &k_now[p]);
                        v.axpy(0.5 * dt, &k_next[p]);
                    }
                }
                for (i, h) in basis.scaled_at(p).iter().enumerate() {
                    v.axpy(sqrt_nu * dw.get(i, j), h);
                }
                v
            })
            .collect();
        samples.push(std::mem::replace(
            &mut current,
            TensorField::from_values(lattice.clone(), next)?,
        ));

        if spd_exit.is_none() {
            match MetricField::new(&current, floor) {
                Ok(m) => metrics.as_mut().unwrap().push(m),
                Err(e) => {
                    let point = e.degeneracy().and_then(|d| d.point).unwrap_or(0);
                    let min_eigenvalue = e
                        .degeneracy()
                        .map(|d| d.min_eigenvalue)
                        .unwrap_or_else(|| min_eigenvalue(current.at(point)));
                    spd_exit = Some(SpdExit {
                        step: j + 1,
                        time: grid.time(j + 1),
                        point,
                        min_eigenvalue,
                    });
                    metrics = None;
                }
            }
        }
    }
    samples.push(current);
    Ok(SdeSample {
        path: TimePath::new(grid, samples)?,
        metrics,
        spd_exit,
    })
}

/// Coefficients of `dg^-1 = sum_i diffusion_i dW_i + drift dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseSdeCoeffs {
    pub diffusion: Vec<SymMat>,
    pub drift: SymMat,
}

/// Same as [`inverse_sde_coeffs`], in terms of the inverse metric itself.
pub(crate) fn inverse_coeffs_from_inverse(
    ginv: &Mat,
    k: &SymMat,
    elements: &[SymMat],
    nu: f64,
) -> Result<InverseSdeCoeffs> {
    let sqrt_nu = nu.sqrt();
    let mut inner = k.to_mat();
    let diffusion = elements
        .iter()
        .map(|h| {
            let hm = h.to_mat();
            let h_ginv = &hm * ginv;
            inner.axpy(-nu, &(&h_ginv * &hm));
            (&(ginv * &hm) * ginv)
                .scale(-sqrt_nu)
                .symmetrize_checked("inverse diffusion coefficient")
        })
        .collect::<Result<Vec<_>>>()?;
    let drift = (&(ginv * &inner) * ginv)
        .scale(-1.0)
        .symmetrize_checked("inverse drift coefficient")?;
    Ok(InverseSdeCoeffs { diffusion, drift })
}

/// Ito coefficients of `g^-1`:
/// diffusion `-sqrt(nu) g^-1 H_i g^-1`, drift `-g^-1 (K - nu sum_i H_i g^-1 H_i) g^-1`.
pub fn inverse_sde_coeffs(g: &SpdMat, k: &SymMat, elements: &[SymMat], nu: f64) -> Result<InverseSdeCoeffs> {
    Error::check_dim(g.dim(), k.dim())?;
    for h in elements {
        Error::check_dim(g.dim(), h.dim())?;
    }
    inverse_coeffs_from_inverse(g.inverse(), k, elements, nu)
}

/// Coefficients of `d vol(g) = (sum_i noise_i dW_i + drift dt) vol(g)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeItoCoeffs {
    pub noise: Vec<f64>,
    pub drift: f64,
}

/// Ito coefficients of `vol(g) = sqrt(det g)`, as multiples of `vol(g)`:
/// noise `1/2 sqrt(nu) tr_g(H_i)`, drift
/// `1/2 (tr_g(K) + nu/2 sum_i (D_{H_i} tr_g(H_i) + 1/2 tr_g(H_i)^2))`.
pub fn volume_ito_coeffs(g: &SpdMat, k: &SymMat, elements: &[SymMat], nu: f64) -> Result<VolumeItoCoeffs> {
    Error::check_dim(g.dim(), k.dim())?;
    let sqrt_nu = nu.sqrt();
    let mut second_order = 0.0;
    let mut noise = Vec::with_capacity(elements.len());
    for h in elements {
        Error::check_dim(g.dim(), h.dim())?;
        let raised = g.raise(&h.to_mat());
        let tr_h = raised.trace();
        let dir_deriv = -raised.trace_product(&raised);
        second_order += dir_deriv + 0.5 * tr_h * tr_h;
        noise.push(0.5 * sqrt_nu * tr_h);
    }
    let drift = 0.5 * (g.tr(&k.to_mat()) + 0.5 * nu * second_order);
    Ok(VolumeItoCoeffs { noise, drift })
}
