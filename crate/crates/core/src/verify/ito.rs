use rayon::prelude::*;
use serde::Serialize;

use super::{convergence_order, over_samples, paired_report, BrownianPaths, McReport, Slack};
use crate::dynamics::{inverse_coeffs_from_inverse, simulate_metric_sde, volume_ito_coeffs, DriftRule, TimePath};
use crate::error::{Error, Result};
use crate::field::{MetricField, NoiseBasis};
use crate::stats::{mean_se, pairwise_sum};
use crate::tensor::SymMat;

/// Strong errors at several step sizes and the fitted order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongConvergence {
    /// `(dt, E max_j |Y_j - g_j^-1|_F)` from coarsest to finest.
    pub errors: Vec<(f64, f64)>,
    pub std_errs: Vec<f64>,
    pub order: f64,
    pub samples: usize,
    pub spd_exits: usize,
}

fn subsample(path: &TimePath, factor: usize) -> Result<TimePath> {
    let grid = path.grid().coarsened(factor)?;
    TimePath::new(grid, path.samples().iter().step_by(factor).cloned().collect())
}

/// Worst Frobenius distance between an Euler-Maruyama solution `Y` of the
/// inverse-metric SDE and the inverse of the simulated metric, or `None`
/// if the metric left the SPD cone.
fn inverse_error(
    g0: &MetricField,
    drift: &TimePath,
    basis: &NoiseBasis,
    nu: f64,
    paths: &BrownianPaths,
    s: usize,
) -> Result<Option<f64>> {
    let dw = paths.increments(s);
    let sample = simulate_metric_sde(g0, drift, basis, nu, &dw, DriftRule::LeftPoint)?;
    let Some(metrics) = sample.metrics else {
        return Ok(None);
    };
    let dt = paths.grid().dt();
    let mut y: Vec<SymMat> = g0.values().iter().map(|g| g.inverse().symmetrize()).collect();
    let mut worst: f64 = 0.0;
    for (j, g) in metrics.iter().enumerate().skip(1) {
        for (p, yp) in y.iter_mut().enumerate() {
            let c = inverse_coeffs_from_inverse(&yp.to_mat(), drift.at(j - 1).at(p), basis.scaled_at(p), nu)?;
            let mut next = yp.clone();
            next.axpy(dt, &c.drift);
            for (i, d) in c.diffusion.iter().enumerate() {
                next.axpy(dw.get(i, j - 1), d);
            }
            *yp = next;
            worst = worst.max((&*yp - &g.at(p).inverse().symmetrize()).norm());
        }
    }
    Ok(Some(worst))
}

/// Strong convergence of Euler-Maruyama on the inverse-metric SDE against
/// the exact inverse of the simulated metric, with the same increments.
/// `paths` is the finest resolution; each entry of `factors` coarsens it.
/// Factors must be decreasing, so `dt` runs from coarsest to finest. A
/// sample that leaves the cone at any resolution is dropped at all of them.
pub fn verify_inverse_strong(
    g0: &MetricField,
    drift: &TimePath,
    basis: &NoiseBasis,
    nu: f64,
    paths: &BrownianPaths,
    factors: &[usize],
) -> Result<StrongConvergence> {
    if drift.grid() != paths.grid() {
        return Err(Error::contract("drift and Brownian paths need one time grid"));
    }
    let levels = factors
        .iter()
        .map(|&f| Ok((subsample(drift, f)?, paths.coarsened(f)?)))
        .collect::<Result<Vec<_>>>()?;
    let per_sample = (0..paths.samples())
        .into_par_iter()
        .map(|s| {
            let mut errs = Vec::with_capacity(levels.len());
            for (d, p) in &levels {
                match inverse_error(g0, d, basis, nu, p, s)? {
                    Some(e) => errs.push(e),
                    None => return Ok(None),
                }
            }
            Ok(Some(errs))
        })
        .collect::<Result<Vec<Option<Vec<f64>>>>>()?;
    let spd_exits = per_sample.iter().filter(|e| e.is_none()).count();
    let kept: Vec<Vec<f64>> = per_sample.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::contract("too few samples stayed in the SPD cone"));
    }
    let mut errors = Vec::with_capacity(levels.len());
    let mut std_errs = Vec::with_capacity(levels.len());
    for (l, (_, p)) in levels.iter().enumerate() {
        let column: Vec<f64> = kept.iter().map(|e| e[l]).collect();
        let stats = mean_se(&column);
        errors.push((p.grid().dt(), stats.mean));
        std_errs.push(stats.std_err);
    }
    Ok(StrongConvergence {
        order: convergence_order(&errors)?,
        errors,
        std_errs,
        samples: kept.len(),
        spd_exits,
    })
}

/// Compares `E vol(g(T))` computed directly from the simulated metric with
/// the Euler-Maruyama solution of the volume SDE, per lattice point, driven
/// by the same increments.
pub fn verify_volume_ito(
    g0: &MetricField,
    drift: &TimePath,
    basis: &NoiseBasis,
    nu: f64,
    paths: &BrownianPaths,
) -> Result<McReport> {
    if drift.grid() != paths.grid() {
        return Err(Error::contract("drift and Brownian paths need one time grid"));
    }
    let dt = paths.grid().dt();
    let w = g0.lattice().cell_weight();
    let (pairs, exits) = over_samples(g0, drift, basis, nu, paths, |metrics, dw| {
        let mut vol: Vec<f64> = g0.values().iter().map(|g| g.sqrt_det()).collect();
        for (j, g) in metrics[..dw.steps()].iter().enumerate() {
            for (p, v) in vol.iter_mut().enumerate() {
                let c = volume_ito_coeffs(g.at(p), drift.at(j).at(p), basis.scaled_at(p), nu)?;
                let noise: f64 = c.noise.iter().enumerate().map(|(i, a)| a * dw.get(i, j)).sum();
                *v *= 1.0 + noise + c.drift * dt;
            }
        }
        let last = &metrics[metrics.len() - 1];
        let direct: Vec<f64> = last.values().iter().map(|g| g.sqrt_det() * w).collect();
        let ito: Vec<f64> = vol.iter().map(|v| v * w).collect();
        Ok((pairwise_sum(&direct), pairwise_sum(&ito)))
    })?;
    Ok(paired_report(&pairs, paths.seed(), exits, Slack::default()))
}
