use super::{over_samples, paired_report, trapezoid, BrownianPaths, Experiment, McReport, Slack};
use crate::error::{Error, Result};
use crate::field::{MetricField, NoiseBasis, TensorField};
use crate::stats::{mean_se, pairwise_sum};
use crate::tensor::{Mat, SpdMat};

/// `tr(g^-1 a g^-1 b)` for arbitrary square `a`, `b`.
fn pair(g: &SpdMat, a: &Mat, b: &Mat) -> f64 {
    g.raise(a).trace_product(&g.raise(b))
}

/// Lattice sum of `f(p, g_p) sqrt(det g_p) w`.
fn integrate(g: &MetricField, mut f: impl FnMut(usize, &SpdMat) -> f64) -> f64 {
    let w = g.lattice().cell_weight();
    let terms: Vec<f64> = g
        .values()
        .iter()
        .enumerate()
        .map(|(p, gp)| f(p, gp) * gp.sqrt_det() * w)
        .collect();
    pairwise_sum(&terms)
}

/// The tensor paired with `V` on the right side of the identity, written out
/// term by term:
///
/// `-2 K x K + K' + 1/2 tr_g(K) K
///   + nu sum_i [H x H x K + K x H x H + H x K x H
///               + 1/2 (1/2 (D_H tr_g(H) + 1/2 tr_g(H)^2) K - tr_g(H) (H x K + K x H))]`
fn rhs_tensor(g: &SpdMat, k: &Mat, dk: &Mat, elements: &[Mat], nu: f64) -> Mat {
    let ginv = g.inverse();
    let x = |a: &Mat, b: &Mat| &(a * ginv) * b;
    let trg = |a: &Mat| g.tr(a);

    let mut out = x(k, k).scale(-2.0);
    out.axpy(1.0, dk);
    out.axpy(0.5 * trg(k), k);
    for h in elements {
        let hh = x(h, h);
        let tr_h = trg(h);
        let d_tr_h = -trg(&hh);
        let mut bracket = x(&hh, k);
        bracket.axpy(1.0, &x(&x(k, h), h));
        bracket.axpy(1.0, &x(&x(h, k), h));
        let mut half = k.scale(0.5 * (d_tr_h + 0.5 * tr_h * tr_h));
        half.axpy(-tr_h, &x(h, k));
        half.axpy(-tr_h, &x(k, h));
        bracket.axpy(0.5, &half);
        out.axpy(nu, &bracket);
    }
    out
}

fn to_mats(f: &TensorField) -> Vec<Mat> {
    f.values().iter().map(|v| v.to_mat()).collect()
}

/// Monte Carlo check of the stochastic integration-by-parts identity
///
/// `E int G_g(K, V') dt = -E int G_g(-2 K x K + K' + 1/2 tr_g(K) K + nu (...), V) dt`
///
/// with `g` simulated from `exp.g0` with drift `exp.drift`. Both sides use
/// the same sample paths; time integrals use the trapezoid rule and `K'`,
/// `V'` second-order finite differences on the grid.
pub fn verify_ibp(exp: &Experiment, paths: &BrownianPaths, slack: Slack) -> Result<McReport> {
    exp.validate(paths)?;
    let grid = *paths.grid();
    let dt = grid.dt();
    let dk = exp.drift.time_derivative()?;
    let dv = exp.variation.time_derivative()?;
    let n_points = exp.g0.lattice().point_count();
    let elements: Vec<Vec<Mat>> = (0..n_points)
        .map(|p| exp.basis.scaled_at(p).iter().map(|h| h.to_mat()).collect())
        .collect();
    let steps: Vec<[Vec<Mat>; 4]> = (0..=grid.steps())
        .map(|j| {
            [
                to_mats(exp.drift.at(j)),
                to_mats(dk.at(j)),
                to_mats(exp.variation.at(j)),
                to_mats(dv.at(j)),
            ]
        })
        .collect();

    let (pairs, exits) = over_samples(&exp.g0, &exp.drift, &exp.basis, exp.nu, paths, |metrics, _| {
        let mut lhs = Vec::with_capacity(metrics.len());
        let mut rhs = Vec::with_capacity(metrics.len());
        for (g, [k, dk, v, dv]) in metrics.iter().zip(&steps) {
            lhs.push(integrate(g, |p, gp| pair(gp, &k[p], &dv[p])));
            rhs.push(-integrate(g, |p, gp| {
                pair(gp, &rhs_tensor(gp, &k[p], &dk[p], &elements[p], exp.nu), &v[p])
            }));
        }
        Ok((trapezoid(&lhs, dt), trapezoid(&rhs, dt)))
    })?;
    Ok(paired_report(&pairs, paths.seed(), exits, slack))
}

/// Per-sample values of the Ito-integral part of `d G_g(K, V)`:
///
/// `sqrt(nu) sum_i int int [-tr(g^-1 H g^-1 K g^-1 V) - tr(g^-1 K g^-1 H g^-1 V)
///                          + 1/2 tr_g(H) tr(g^-1 K g^-1 V)] vol(g) dW_i`
///
/// accumulated with left-point (Ito) sums. The report compares the sample
/// mean with zero.
pub fn martingale_terms(exp: &Experiment, paths: &BrownianPaths) -> Result<McReport> {
    exp.validate(paths)?;
    let sqrt_nu = exp.nu.sqrt();
    let basis: &NoiseBasis = &exp.basis;
    let (values, exits) = over_samples(&exp.g0, &exp.drift, basis, exp.nu, paths, |metrics, dw| {
        let mut terms = Vec::with_capacity(dw.steps() * basis.len());
        for (j, g) in metrics[..dw.steps()].iter().enumerate() {
            let k = exp.drift.at(j);
            let v = exp.variation.at(j);
            for i in 0..basis.len() {
                let integrand = integrate(g, |p, gp| {
                    let h = basis.scaled_at(p)[i].to_mat();
                    let (km, vm) = (k.at(p).to_mat(), v.at(p).to_mat());
                    let ginv = gp.inverse();
                    let khv = -(&(&(&(ginv * &h) * ginv) * &km) * ginv).trace_product(&vm);
                    let hkv = -(&(&(&(ginv * &km) * ginv) * &h) * ginv).trace_product(&vm);
                    khv + hkv + 0.5 * gp.tr(&h) * pair(gp, &km, &vm)
                });
                terms.push(sqrt_nu * integrand * dw.get(i, j));
            }
        }
        Ok(pairwise_sum(&terms))
    })?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("martingale increment"));
    }
    let stats = mean_se(&values);
    let mut report = McReport::new(stats.mean, 0.0, stats.std_err, values.len(), paths.seed(), Slack::default());
    report.spd_exits = exits;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_el, TimeGrid, TimePath};
    use crate::field::{make_basis_elementary, Lattice};
    use crate::tensor::SymMat;
    use crate::verify::sample_brownian;

    fn experiment(nu: f64, steps: usize, bump: f64) -> (Experiment, BrownianPaths) {
        let lat = Lattice::single_point(3);
        let g0 = MetricField::constant(&lat, &SymMat::scaled_identity(3, 2.0)).unwrap();
        let basis = make_basis_elementary(&lat, 3).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let k0 = SymMat::from_upper(3, &[0.5, 0.2, 0.0, -0.3, 0.1, 0.4]).unwrap();
        let (_, drift) = integrate_el(&g0, &TensorField::constant(&lat, &k0), &basis, nu, &grid).unwrap();
        let m = SymMat::from_upper(3, &[1.0, 0.3, 0.0, 0.5, 0.2, -0.7]).unwrap();
        let variation = TimePath::from_fn(grid, |t| TensorField::constant(&lat, &m.scale(bump * 4.0 * t * (1.0 - t))))
            .unwrap();
        let paths = sample_brownian(3, 400, basis.len(), grid).unwrap();
        (Experiment { g0, drift, variation, basis, nu }, paths)
    }

    #[test]
    fn zero_variation_gives_exact_zeros() {
        let (exp, paths) = experiment(0.1, 20, 0.0);
        let r = verify_ibp(&exp, &paths, Slack::default()).unwrap();
        assert_eq!((r.lhs, r.rhs, r.se), (0.0, 0.0, 0.0));
        assert!(r.pass);
    }

    #[test]
    fn deterministic_identity_holds_to_discretization_error() {
        let (exp, paths) = experiment(0.0, 400, 1.0);
        let r = verify_ibp(&exp, &paths.truncated(2).unwrap(), Slack::default()).unwrap();
        assert!(r.lhs.abs() > 1e-3, "{r:?}");
        assert!((r.lhs - r.rhs).abs() < 1e-4 * r.lhs.abs(), "{r:?}");
    }

    #[test]
    fn rejects_variation_that_does_not_vanish() {
        let (mut exp, paths) = experiment(0.1, 10, 1.0);
        exp.variation = exp.drift.clone();
        assert!(matches!(verify_ibp(&exp, &paths, Slack::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn martingale_part_has_mean_zero() {
        let (exp, paths) = experiment(0.1, 50, 1.0);
        let r = martingale_terms(&exp, &paths).unwrap();
        assert!(r.se > 0.0);
        assert!(r.pass, "{r:?}");
    }
}
