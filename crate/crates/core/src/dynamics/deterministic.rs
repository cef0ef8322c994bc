use super::{TimeGrid, TimePath};
use crate::error::{Error, Result};
use crate::field::{MetricField, NoiseBasis, TensorField};
use crate::tensor::{Mat, SpdMat, SymMat};

/// Right side of the Ebin geodesic equation at one point:
/// `v x v + 1/4 tr_g(v x v) g - 1/2 tr_g(v) v`.
pub fn geodesic_rhs_at(g: &SpdMat, v: &SymMat) -> Result<SymMat> {
    Error::check_dim(g.dim(), v.dim())?;
    let vm = v.to_mat();
    let raised = g.raise(&vm);
    let mut out = &vm * &raised;
    out.axpy(0.25 * raised.trace_product(&raised), g.full());
    out.axpy(-0.5 * raised.trace(), &vm);
    out.symmetrize_checked("geodesic right-hand side")
}

/// The second-order correction operator at one point, for noise directions
/// already scaled by their amplitudes:
///
/// `sum_i H x H x K + H x K x H + K x H x H
///        + 1/4 (D_H tr_g(H) + 1/2 tr_g(H)^2) K - 1/2 tr_g(H) (H x K + K x H)`
///
/// where `D_H tr_g(H) = -tr_g(H x H)` is the derivative of `g -> tr_g(H)`
/// along `H`.
pub fn correction_l_at(g: &SpdMat, k: &SymMat, elements: &[SymMat]) -> Result<SymMat> {
    let n = g.dim();
    Error::check_dim(n, k.dim())?;
    let km = k.to_mat();
    let raised_k = g.raise(&km);
    let mut out = Mat::zeros(n);
    for h in elements {
        Error::check_dim(n, h.dim())?;
        let hm = h.to_mat();
        let raised_h = g.raise(&hm);
        let h_raised_h = &hm * &raised_h;
        let h_raised_k = &hm * &raised_k;
        let k_raised_h = &km * &raised_h;
        let tr_h = raised_h.trace();
        let dir_deriv = -raised_h.trace_product(&raised_h);

        out.axpy(1.0, &(&h_raised_h * &raised_k));
        out.axpy(1.0, &(&h_raised_k * &raised_h));
        out.axpy(1.0, &(&k_raised_h * &raised_h));
        out.axpy(0.25 * (dir_deriv + 0.5 * tr_h * tr_h), &km);
        out.axpy(-0.5 * tr_h, &h_raised_k);
        out.axpy(-0.5 * tr_h, &k_raised_h);
    }
    out.symmetrize_checked("correction operator")
}

/// Right side of the modified Euler-Lagrange equation at one point.
pub fn el_rhs_at(g: &SpdMat, k: &SymMat, elements: &[SymMat], nu: f64) -> Result<SymMat> {
    let mut out = geodesic_rhs_at(g, k)?;
    if nu != 0.0 {
        out.axpy(-nu, &correction_l_at(g, k, elements)?);
    }
    Ok(out)
}

fn pointwise(
    g: &MetricField,
    v: &TensorField,
    f: impl Fn(usize, &SpdMat, &SymMat) -> Result<SymMat>,
) -> Result<TensorField> {
    g.lattice().ensure_same(v.lattice())?;
    let values = g
        .values()
        .iter()
        .zip(v.values())
        .enumerate()
        .map(|(p, (gp, vp))| f(p, gp, vp))
        .collect::<Result<Vec<_>>>()?;
    TensorField::from_values(g.lattice().clone(), values)
}

pub fn geodesic_rhs(g: &MetricField, gdot: &TensorField) -> Result<TensorField> {
    pointwise(g, gdot, |_, gp, vp| geodesic_rhs_at(gp, vp))
}

pub fn correction_l(g: &MetricField, k: &TensorField, basis: &NoiseBasis) -> Result<TensorField> {
    g.lattice().ensure_same(basis.lattice())?;
    pointwise(g, k, |p, gp, kp| correction_l_at(gp, kp, basis.scaled_at(p)))
}

pub fn el_rhs(g: &MetricField, k: &TensorField, basis: &NoiseBasis, nu: f64) -> Result<TensorField> {
    g.lattice().ensure_same(basis.lattice())?;
    pointwise(g, k, |p, gp, kp| el_rhs_at(gp, kp, basis.scaled_at(p), nu))
}

fn offset(base: &TensorField, c: f64, dir: &TensorField) -> Result<TensorField> {
    let mut out = base.clone();
    out.axpy(c, dir)?;
    Ok(out)
}

/// Classical RK4 on the first-order system `g' = v, v' = accel(g, v)`.
/// Every stage metric is certified positive definite.
fn rk4_second_order(
    g0: &MetricField,
    v0: &TensorField,
    grid: &TimeGrid,
    accel: impl Fn(&MetricField, &TensorField) -> Result<TensorField>,
) -> Result<(TimePath, TimePath)> {
    g0.lattice().ensure_same(v0.lattice())?;
    let dt = grid.dt();
    let mut g = g0.clone();
    let mut v = v0.clone();
    let mut gs = Vec::with_capacity(grid.steps() + 1);
    let mut vs = Vec::with_capacity(grid.steps() + 1);
    gs.push(g.to_tensor());
    vs.push(v.clone());

    for j in 0..grid.steps() {
        let t = grid.time(j);
        let at = |time: f64| move |e: Error| e.at_time(time);
        let gt = g.to_tensor();

        let a1 = accel(&g, &v).map_err(at(t))?;
        let g2 = g.recertify(&offset(&gt, 0.5 * dt, &v)?).map_err(at(t + 0.5 * dt))?;
        let v2 = offset(&v, 0.5 * dt, &a1)?;
        let a2 = accel(&g2, &v2).map_err(at(t + 0.5 * dt))?;
        let g3 = g.recertify(&offset(&gt, 0.5 * dt, &v2)?).map_err(at(t + 0.5 * dt))?;
        let v3 = offset(&v, 0.5 * dt, &a2)?;
        let a3 = accel(&g3, &v3).map_err(at(t + 0.5 * dt))?;
        let g4 = g.recertify(&offset(&gt, dt, &v3)?).map_err(at(t + dt))?;
        let v4 = offset(&v, dt, &a3)?;
        let a4 = accel(&g4, &v4).map_err(at(t + dt))?;

        let w = dt / 6.0;
        let g_next = TensorField::linear_combination(&[
            (1.0, &gt),
            (w, &v),
            (2.0 * w, &v2),
            (2.0 * w, &v3),
            (w, &v4),
        ])?;
        let v_next = TensorField::linear_combination(&[
            (1.0, &v),
            (w, &a1),
            (2.0 * w, &a2),
            (2.0 * w, &a3),
            (w, &a4),
        ])?;
        g = g.recertify(&g_next).map_err(at(grid.time(j + 1)))?;
        v = v_next;
        gs.push(g.to_tensor());
        vs.push(v.clone());
    }
    Ok((TimePath::new(*grid, gs)?, TimePath::new(*grid, vs)?))
}

/// Integrates the Ebin geodesic equation; returns the paths of `g` and `g'`.
pub fn integrate_geodesic(
    g0: &MetricField,
    gdot0: &TensorField,
    grid: &TimeGrid,
) -> Result<(TimePath, TimePath)> {
    rk4_second_order(g0, gdot0, grid, geodesic_rhs)
}

/// Integrates `g' = K, K' = el_rhs(g, K)`; returns the paths of `g` and `K`.
/// With `nu = 0` this reproduces [`integrate_geodesic`] exactly.
pub fn integrate_el(
    g0: &MetricField,
    k0: &TensorField,
    basis: &NoiseBasis,
    nu: f64,
    grid: &TimeGrid,
) -> Result<(TimePath, TimePath)> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::contract("nu must be finite and nonnegative"));
    }
    g0.lattice().ensure_same(basis.lattice())?;
    rk4_second_order(g0, k0, grid, |g, k| el_rhs(g, k, basis, nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Lattice;
    use crate::tensor::{spd_guard, DEFAULT_SPD_FLOOR};

    fn spd(m: &SymMat) -> SpdMat {
        spd_guard(m, DEFAULT_SPD_FLOOR).unwrap()
    }

    #[test]
    fn geodesic_rhs_examples() {
        let g = spd(&SymMat::identity(3));
        assert!(geodesic_rhs_at(&g, &SymMat::zeros(3)).unwrap().is_zero());
        let r = geodesic_rhs_at(&g, &SymMat::diag(&[2., 0., 0.])).unwrap();
        assert_eq!(r, SymMat::diag(&[3., 1., 1.]));

        // conformal velocity a g gives a^2 g / 4
        let base = SymMat::from_upper(3, &[2., 0.3, 0.1, 1.5, -0.2, 1.2]).unwrap();
        let g = spd(&base);
        let a = 1.7;
        let r = geodesic_rhs_at(&g, &base.scale(a)).unwrap();
        assert!((&r - &base.scale(0.25 * a * a)).max_abs() < 1e-13);
    }

    #[test]
    fn correction_examples() {
        let g = spd(&SymMat::identity(3));
        assert!(correction_l_at(&g, &SymMat::identity(3), &[]).unwrap().is_zero());

        let r = correction_l_at(&g, &SymMat::identity(3), &[SymMat::diag(&[1., -1., 0.])]).unwrap();
        assert_eq!(r, SymMat::diag(&[2.5, 2.5, -0.5]));

        let base = SymMat::from_upper(3, &[2., 0.3, 0.1, 1.5, -0.2, 1.2]).unwrap();
        let g = spd(&base);
        let k = SymMat::from_upper(3, &[0.4, -1., 0.2, 0.3, 0.5, -0.7]).unwrap();
        let r = correction_l_at(&g, &k, &[base.clone()]).unwrap();
        assert!((&r - &k.scale(0.375)).max_abs() < 1e-13);
    }

    #[test]
    fn el_rhs_examples() {
        let g = spd(&SymMat::identity(3));
        let i = SymMat::identity(3);
        let r = el_rhs_at(&g, &i, &[i.clone()], 1.0).unwrap();
        assert!((&r - &SymMat::scaled_identity(3, -0.125)).max_abs() < 1e-15);
        assert!(el_rhs_at(&g, &SymMat::zeros(3), &[i.clone()], 0.7).unwrap().is_zero());
        let k = SymMat::from_upper(3, &[0.4, -1., 0.2, 0.3, 0.5, -0.7]).unwrap();
        assert_eq!(el_rhs_at(&g, &k, &[i], 0.0).unwrap(), geodesic_rhs_at(&g, &k).unwrap());
    }

    #[test]
    fn zero_velocity_is_stationary() {
        let lat = Lattice::single_point(3);
        let g0 = MetricField::identity(&lat);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let (gs, vs) = integrate_geodesic(&g0, &TensorField::zeros(&lat), &grid).unwrap();
        assert!(gs.samples().iter().all(|g| g == &g0.to_tensor()));
        assert!(vs.samples().iter().all(TensorField::is_zero));
    }

    #[test]
    fn collapsing_conformal_geodesic_fails_near_four_thirds() {
        let lat = Lattice::single_point(3);
        let g0 = MetricField::identity(&lat);
        let grid = TimeGrid::with_dt(0.0, 2.0, 1e-3).unwrap();
        let gdot0 = TensorField::constant(&lat, &SymMat::scaled_identity(3, -1.0));
        let err = integrate_geodesic(&g0, &gdot0, &grid).unwrap_err();
        let t = err.degeneracy().and_then(|d| d.time).expect("failure time");
        assert!((t - 4.0 / 3.0).abs() < 5e-3, "failed at t = {t}");
    }
}
