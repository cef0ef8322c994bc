//! Monte Carlo checks of the stochastic calculus on the space of metrics.
//!
//! Every two-sided comparison evaluates both sides on the same Brownian
//! paths and reports the standard error of the paired per-sample
//! difference. Samples are independent work units run in parallel; their
//! results are collected in sample order and reduced with a fixed summation
//! tree, so reports are bit-identical for any thread count.

mod action;
mod brownian;
mod drift;
mod identities;
mod ito;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{simulate_metric_sde, DriftRule, TimePath};
use crate::error::{Error, Result};
use crate::field::{MetricField, NoiseBasis};
use crate::stats::{mean_se, pairwise_sum};

pub use action::{action_j, verify_critical_point, CriticalPointReport};
pub use brownian::{sample_brownian, BrownianPaths, SampleIncrements};
pub use drift::{estimate_drift, DriftEstimate};
pub use identities::{martingale_terms, verify_ibp};
pub use ito::{verify_inverse_strong, verify_volume_ito, StrongConvergence};

/// Curvature allowance per unit `delta_s^2` in the critical-point check.
pub const CURVATURE_ALLOWANCE: f64 = 10.0;

/// Extra slack in the pass rule beyond three standard errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Slack {
    /// Absolute allowance added to the bound.
    pub allowance: f64,
    /// Allowance relative to `max(|lhs|, |rhs|)`, for deterministic runs
    /// where the only error is discretization.
    pub rel_tol: f64,
}

/// Outcome of one Monte Carlo comparison `lhs == rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub samples: usize,
    pub pass: bool,
    pub seed: u64,
    pub config_digest: Option<String>,
    pub abs_floor: f64,
    pub allowance: f64,
    pub rel_tol: f64,
    /// Samples discarded because the simulated metric left the SPD cone.
    pub spd_exits: usize,
}

impl McReport {
    /// Applies `|lhs - rhs| <= 3 se + abs_floor (+ slack)` with
    /// `abs_floor = 1e-9 (|lhs| + |rhs| + 1)`.
    pub fn new(lhs: f64, rhs: f64, se: f64, samples: usize, seed: u64, slack: Slack) -> Self {
        let abs_floor = 1e-9 * (lhs.abs() + rhs.abs() + 1.0);
        let bound = 3.0 * se + abs_floor + slack.allowance + slack.rel_tol * lhs.abs().max(rhs.abs());
        Self {
            lhs,
            rhs,
            se,
            samples,
            pass: (lhs - rhs).abs() <= bound,
            seed,
            config_digest: None,
            abs_floor,
            allowance: slack.allowance,
            rel_tol: slack.rel_tol,
            spd_exits: 0,
        }
    }

    /// The right side of the pass rule.
    pub fn bound(&self) -> f64 {
        3.0 * self.se + self.abs_floor + self.allowance + self.rel_tol * self.lhs.abs().max(self.rhs.abs())
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.config_digest = Some(digest.into());
        self
    }
}

/// The data shared by the integration-by-parts and critical-point checks:
/// the process `dg = sqrt(nu) sum a_i H_i dW_i + K dt` from `g0`, and a
/// variation `V` with `V(a) = V(b) = 0`.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub g0: MetricField,
    pub drift: TimePath,
    pub variation: TimePath,
    pub basis: NoiseBasis,
    pub nu: f64,
}

impl Experiment {
    pub(crate) fn validate(&self, paths: &BrownianPaths) -> Result<()> {
        let lattice = self.g0.lattice();
        lattice.ensure_same(self.drift.lattice())?;
        lattice.ensure_same(self.variation.lattice())?;
        lattice.ensure_same(self.basis.lattice())?;
        if self.drift.grid() != self.variation.grid() || self.drift.grid() != paths.grid() {
            return Err(Error::contract("drift, variation and Brownian paths need one time grid"));
        }
        if paths.basis_count() != self.basis.len() {
            return Err(Error::contract("Brownian paths do not match the noise basis"));
        }
        if !self.variation.vanishes_at_ends() {
            return Err(Error::contract("variation must vanish at both ends of the interval"));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::contract("nu must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// `dt * (sum_j f_j - (f_0 + f_m) / 2)`.
pub(crate) fn trapezoid(values: &[f64], dt: f64) -> f64 {
    let ends = 0.5 * (values[0] + values[values.len() - 1]);
    dt * (pairwise_sum(values) - ends)
}

/// Runs `per_sample` on the certified metric path of every sample, in
/// parallel, and returns the per-sample outputs in sample order together
/// with the number of samples that left the SPD cone. A degenerate metric
/// met inside `per_sample` also counts as leaving the cone.
pub(crate) fn over_samples<T: Send>(
    g0: &MetricField,
    drift: &TimePath,
    basis: &NoiseBasis,
    nu: f64,
    paths: &BrownianPaths,
    per_sample: impl Fn(&[MetricField], &SampleIncrements) -> Result<T> + Sync,
) -> Result<(Vec<T>, usize)> {
    let outcomes = (0..paths.samples())
        .into_par_iter()
        .map(|s| {
            let dw = paths.increments(s);
            let sample = simulate_metric_sde(g0, drift, basis, nu, &dw, DriftRule::Trapezoid)?;
            match sample.metrics {
                Some(metrics) => match per_sample(&metrics, &dw) {
                    Ok(v) => Ok(Some(v)),
                    Err(e) if e.degeneracy().is_some() => Ok(None),
                    Err(e) => Err(e),
                },
                None => Ok(None),
            }
        })
        .collect::<Result<Vec<Option<T>>>>()?;
    let exits = outcomes.iter().filter(|o| o.is_none()).count();
    let kept: Vec<T> = outcomes.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::contract(format!(
            "only {} of {} samples stayed in the SPD cone",
            kept.len(),
            paths.samples()
        )));
    }
    Ok((kept, exits))
}

/// Least-squares slope of `log error` against `log dt`.
pub fn convergence_order(errors: &[(f64, f64)]) -> Result<f64> {
    if errors.len() < 3 {
        return Err(Error::contract("convergence order needs at least three points"));
    }
    if errors.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::contract("step sizes must be strictly decreasing"));
    }
    if errors.iter().any(|&(dt, e)| !(dt > 0.0 && e > 0.0 && dt.is_finite() && e.is_finite())) {
        return Err(Error::contract("step sizes and errors must be positive and finite"));
    }
    let xs: Vec<f64> = errors.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (pairwise_sum(&xs) / n, pairwise_sum(&ys) / n);
    let sxy: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    Ok(pairwise_sum(&sxy) / pairwise_sum(&sxx))
}

/// Paired comparison of per-sample `(lhs, rhs)` values.
pub(crate) fn paired_report(pairs: &[(f64, f64)], seed: u64, exits: usize, slack: Slack) -> McReport {
    let lhs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let mut report = McReport::new(
        mean_se(&lhs).mean,
        mean_se(&rhs).mean,
        mean_se(&diff).std_err,
        pairs.len(),
        seed,
        slack,
    );
    report.spd_exits = exits;
    report
}
