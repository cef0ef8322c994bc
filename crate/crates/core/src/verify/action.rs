use serde::Serialize;

use super::{over_samples, BrownianPaths, Experiment, McReport, Slack, CURVATURE_ALLOWANCE};
use crate::error::{Error, Result};
use crate::field::{ebin_inner, MetricField, TensorField};
use crate::stats::{mean_se, MeanSe};

use super::trapezoid;

/// Per-sample `1/2 int G_{g + sV}(K + s V', K + s V') dt` for each `s`.
///
/// The varied process has drift `K + s V'` and the same noise, so pathwise
/// it is `g + s V`.
fn sample_actions(
    metrics: &[MetricField],
    exp: &Experiment,
    dv: &[TensorField],
    ss: &[f64],
) -> Result<Vec<f64>> {
    let dt = exp.drift.grid().dt();
    ss.iter()
        .map(|&s| {
            let integrand = metrics
                .iter()
                .enumerate()
                .map(|(j, g)| {
                    let mut k = exp.drift.at(j).clone();
                    k.axpy(s, &dv[j])?;
                    let g = if s == 0.0 || exp.variation.at(j).is_zero() {
                        g.clone()
                    } else {
                        let mut gs = g.to_tensor();
                        gs.axpy(s, exp.variation.at(j))?;
                        g.recertify(&gs)?
                    };
                    Ok(0.5 * ebin_inner(&g, &k, &k)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(trapezoid(&integrand, dt))
        })
        .collect()
}

/// Monte Carlo estimate of the stochastic kinetic energy of the process
/// varied by `s V`. Samples that leave the SPD cone are dropped.
pub fn action_j(exp: &Experiment, s: f64, paths: &BrownianPaths) -> Result<MeanSe> {
    exp.validate(paths)?;
    let dv = exp.variation.time_derivative()?;
    let (values, _) = over_samples(&exp.g0, &exp.drift, &exp.basis, exp.nu, paths, |metrics, _| {
        Ok(sample_actions(metrics, exp, dv.samples(), &[s])?[0])
    })?;
    Ok(mean_se(&values))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPointReport {
    /// `dJ/ds` at `s = 0` by central differences, compared against zero with
    /// a curvature allowance of `CURVATURE_ALLOWANCE * delta_s^2`.
    pub report: McReport,
    pub delta_s: f64,
    /// Richardson combination of the central differences at `delta_s` and
    /// `delta_s / 2`, a diagnostic for the finite-difference error.
    pub richardson: f64,
    pub richardson_se: f64,
}

/// Checks that the first variation of the action vanishes along `exp.variation`.
pub fn verify_critical_point(exp: &Experiment, paths: &BrownianPaths, delta_s: f64) -> Result<CriticalPointReport> {
    if !(delta_s.is_finite() && delta_s > 0.0) {
        return Err(Error::contract("delta_s must be positive"));
    }
    exp.validate(paths)?;
    let dv = exp.variation.time_derivative()?;
    let h = 0.5 * delta_s;
    let ss = [delta_s, -delta_s, h, -h];
    let (per_sample, exits) = over_samples(&exp.g0, &exp.drift, &exp.basis, exp.nu, paths, |metrics, _| {
        let j = sample_actions(metrics, exp, dv.samples(), &ss)?;
        let coarse = (j[0] - j[1]) / (2.0 * delta_s);
        let fine = (j[2] - j[3]) / (2.0 * h);
        Ok((coarse, (4.0 * fine - coarse) / 3.0))
    })?;
    let coarse: Vec<f64> = per_sample.iter().map(|p| p.0).collect();
    let rich: Vec<f64> = per_sample.iter().map(|p| p.1).collect();
    let c = mean_se(&coarse);
    let r = mean_se(&rich);
    let slack = Slack {
        allowance: CURVATURE_ALLOWANCE * delta_s * delta_s,
        rel_tol: 0.0,
    };
    let mut report = McReport::new(c.mean, 0.0, c.std_err, c.samples, paths.seed(), slack);
    report.spd_exits = exits;
    Ok(CriticalPointReport {
        report,
        delta_s,
        richardson: r.mean,
        richardson_se: r.std_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{TimeGrid, TimePath};
    use crate::field::{make_basis_elementary, Lattice, NoiseBasis};
    use crate::tensor::SymMat;
    use crate::verify::sample_brownian;

    fn setup(k: &SymMat, bump: f64, nu: f64, samples: usize) -> (Experiment, BrownianPaths) {
        let lat = Lattice::single_point(3);
        let basis = if nu == 0.0 {
            NoiseBasis::empty(&lat)
        } else {
            make_basis_elementary(&lat, 3).unwrap()
        };
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let m = SymMat::from_upper(3, &[1.0, 0.3, 0.0, 0.5, 0.2, -0.7]).unwrap();
        let exp = Experiment {
            g0: MetricField::constant(&lat, &SymMat::scaled_identity(3, 2.0)).unwrap(),
            drift: TimePath::constant(grid, &TensorField::constant(&lat, k)),
            variation: TimePath::from_fn(grid, |t| TensorField::constant(&lat, &m.scale(bump * t * (1.0 - t))))
                .unwrap(),
            basis,
            nu,
        };
        let paths = sample_brownian(5, samples, exp.basis.len(), grid).unwrap();
        (exp, paths)
    }

    #[test]
    fn zero_drift_and_variation_give_zero() {
        let (exp, paths) = setup(&SymMat::zeros(3), 0.0, 0.1, 20);
        assert_eq!(action_j(&exp, 0.3, &paths).unwrap().mean, 0.0);
        let r = verify_critical_point(&exp, &paths, 1e-3).unwrap();
        assert_eq!(r.report.lhs, 0.0);
        assert!(r.report.pass);
    }

    #[test]
    fn deterministic_action_matches_quadrature() {
        // g(t) = 2I + tK, integrand 1/2 tr((g^-1 K)^2) sqrt(det g) on a unit cell
        let k = SymMat::diag(&[0.5, -0.3, 0.4]);
        let (exp, paths) = setup(&k, 0.0, 0.0, 2);
        let j = action_j(&exp, 0.0, &paths).unwrap().mean;
        let f = |t: f64| {
            let d = [2.0 + 0.5 * t, 2.0 - 0.3 * t, 2.0 + 0.4 * t];
            let tr: f64 = [0.5 / d[0], -0.3 / d[1], 0.4 / d[2]].iter().map(|x| x * x).sum();
            0.5 * tr * (d[0] * d[1] * d[2]).sqrt()
        };
        // composite Simpson on a fine grid
        let n = 2000;
        let h = 1.0 / n as f64;
        let simpson: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((j - simpson).abs() < 1e-4 * simpson, "{j} vs {simpson}");
    }

    #[test]
    fn action_is_convex_in_s() {
        let k = SymMat::diag(&[0.5, -0.3, 0.4]);
        let (exp, paths) = setup(&k, 1.0, 0.1, 50);
        let j: Vec<f64> = [-0.01, 0.0, 0.01].iter().map(|&s| action_j(&exp, s, &paths).unwrap().mean).collect();
        assert!(j[0] - 2.0 * j[1] + j[2] > 0.0);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let (exp, paths) = setup(&SymMat::zeros(3), 1.0, 0.1, 4);
        assert!(verify_critical_point(&exp, &paths, 0.0).is_err());
        assert!(verify_critical_point(&exp, &paths, -1e-3).is_err());
    }
}
