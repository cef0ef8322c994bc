use rayon::prelude::*;
use serde::Serialize;

use ebin_core::dynamics::{integrate_el, integrate_geodesic, simulate_metric_sde, DriftRule, TimeGrid, TimePath};
use ebin_core::field::{ebin_inner, lie_derivative_metric, Coords, Lattice, MetricField, TensorField, VectorField};
use ebin_core::tensor::SymMat;
use ebin_core::verify::{
    convergence_order, estimate_drift, martingale_terms, sample_brownian, verify_critical_point, verify_ibp,
    verify_inverse_strong, verify_volume_ito, CriticalPointReport, McReport, Slack,
};

use crate::config::{ConfigError, ConvergenceKind, DriftRuleSpec, RunConfig};
use crate::manifest::Check;
use crate::output::{json, num, table_csv, trajectory_csv, OutputDir};
use crate::setup::Setup;
use crate::{AppError, Command};

/// Relative tolerance of the integration-by-parts check when `nu = 0`,
/// where only time discretization separates the two sides.
pub const DETERMINISTIC_IBP_REL_TOL: f64 = 1e-6;
/// Required ratio between the perturbed and the critical `|dJ/ds|`.
pub const CONTRAST_FACTOR: f64 = 10.0;
/// Coarsening factors of the strong-convergence study, coarsest first.
pub const STRONG_FACTORS: [usize; 5] = [16, 8, 4, 2, 1];
pub const MIN_STRONG_ORDER: f64 = 0.4;
pub const MIN_RK4_ORDER: f64 = 3.5;
pub const MIN_LIE_ORDER: f64 = 3.5;
/// Largest per-entry z-score accepted by the drift-recovery check.
pub const DRIFT_Z_LIMIT: f64 = 3.0;

pub fn run(cmd: Command, cfg: &RunConfig, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let setup = Setup::new(cfg)?;
    match cmd {
        Command::Geodesic => geodesic(cfg, &setup, out),
        Command::El => el(cfg, &setup, out),
        Command::Sde => sde(cfg, &setup, out),
        Command::VerifyIbp => verify_ibp_cmd(cfg, &setup, out),
        Command::VerifyCritical => verify_critical(cfg, &setup, out),
        Command::VerifyIto => verify_ito(cfg, &setup, out),
        Command::Convergence => convergence(cfg, &setup, out),
    }
}

fn energies(g: &TimePath, v: &TimePath) -> Result<Vec<f64>, AppError> {
    g.samples()
        .iter()
        .zip(v.samples())
        .map(|(gt, vt)| Ok(ebin_inner(&MetricField::from_tensor(gt)?, vt, vt)?))
        .collect()
}

fn energy_csv(grid: &TimeGrid, e: &[f64]) -> String {
    let rows: Vec<Vec<String>> = grid.times().zip(e).map(|(t, e)| vec![num(t), num(*e)]).collect();
    table_csv(&["t", "energy"], &rows)
}

fn energy_check(e: &[f64], tol: f64) -> Check {
    let e0 = e[0];
    let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
    let drift = e.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max) / scale;
    Check::new("energy_conservation", drift <= tol, format!("relative drift {drift:e}, tolerance {tol:e}"))
}

fn geodesic(cfg: &RunConfig, s: &Setup, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let (g, v) = integrate_geodesic(&s.g0, &s.velocity, &s.grid)?;
    let e = energies(&g, &v)?;
    out.write("trajectory.csv", &trajectory_csv(&g, None))?;
    out.write("energy.csv", &energy_csv(&s.grid, &e))?;
    Ok(vec![energy_check(&e, cfg.energy_tolerance)])
}

fn el(cfg: &RunConfig, s: &Setup, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let (g, k) = integrate_el(&s.g0, &s.velocity, &s.basis, cfg.nu, &s.grid)?;
    let e = energies(&g, &k)?;
    out.write("trajectory.csv", &trajectory_csv(&g, Some(&k)))?;
    out.write("energy.csv", &energy_csv(&s.grid, &e))?;
    // The noise correction does not conserve the energy; only the noiseless
    // flow is checked.
    Ok(if cfg.nu == 0.0 {
        vec![energy_check(&e, cfg.energy_tolerance)]
    } else {
        Vec::new()
    })
}

/// `count` distinct interior steps, evenly spread.
fn interior_steps(steps: usize, count: usize) -> Vec<usize> {
    let mut js: Vec<usize> = (1..=count)
        .map(|k| ((k * steps) as f64 / (count + 1) as f64).round() as usize)
        .filter(|&j| j >= 1 && j < steps)
        .collect();
    js.dedup();
    js
}

#[derive(Serialize)]
struct DriftStep {
    step: usize,
    t: f64,
    max_z_score: f64,
    pass: bool,
}

#[derive(Serialize)]
struct SdeSummary {
    samples: usize,
    spd_exits: usize,
    drift_samples: usize,
    drift_steps: Vec<DriftStep>,
}

fn sde(cfg: &RunConfig, s: &Setup, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let drift = s.drift(cfg)?;
    let rule = match cfg.drift_rule {
        DriftRuleSpec::Left => DriftRule::LeftPoint,
        DriftRuleSpec::Trapezoid => DriftRule::Trapezoid,
    };
    let paths = sample_brownian(cfg.seed, cfg.mc_samples, s.basis.len(), s.grid)?;
    let steps = interior_steps(s.grid.steps(), cfg.drift_steps);
    if steps.len() < cfg.drift_steps {
        return Err(AppError::Config(ConfigError::Invalid {
            key: "drift_steps",
            message: format!("the grid has only {} interior steps", s.grid.steps() - 1),
        }));
    }
    let windows: Vec<TimeGrid> = steps
        .iter()
        .map(|&j| TimeGrid::new(s.grid.time(j), s.grid.time(j + 1), 1))
        .collect::<Result<_, _>>()?;

    type PerSample = (Vec<String>, Vec<TimePath>);
    let per_sample = (0..cfg.mc_samples)
        .into_par_iter()
        .map(|i| -> Result<PerSample, AppError> {
            let sample = simulate_metric_sde(&s.g0, &drift, &s.basis, cfg.nu, &paths.increments(i), rule)?;
            let last = sample.path.last();
            let (exit_step, exit_time, exit_min) = match sample.spd_exit {
                Some(e) => (e.step.to_string(), num(e.time), num(e.min_eigenvalue)),
                None => (String::new(), String::new(), String::new()),
            };
            let volume = match &sample.metrics {
                Some(m) => num(m[m.len() - 1].volume()),
                None => String::new(),
            };
            let row = vec![
                i.to_string(),
                u8::from(sample.spd_exit.is_some()).to_string(),
                exit_step,
                exit_time,
                exit_min,
                volume,
                num(last.max_abs()),
            ];
            let windows = steps
                .iter()
                .zip(&windows)
                .map(|(&j, w)| TimePath::new(*w, vec![sample.path.at(j).clone(), sample.path.at(j + 1).clone()]))
                .collect::<Result<_, _>>()?;
            Ok((row, windows))
        })
        .collect::<Result<Vec<PerSample>, AppError>>()?;

    let rows: Vec<Vec<String>> = per_sample.iter().map(|p| p.0.clone()).collect();
    let spd_exits = rows.iter().filter(|r| r[1] == "1").count();
    out.write(
        "samples.csv",
        &table_csv(
            &["sample", "spd_exit", "exit_step", "exit_time", "exit_min_eigenvalue", "final_volume", "final_max_abs"],
            &rows,
        ),
    )?;

    let mut drift_rows = Vec::new();
    let mut summary = Vec::new();
    for (w, &j) in steps.iter().enumerate() {
        let window: Vec<TimePath> = per_sample.iter().map(|p| p.1[w].clone()).collect();
        let est = estimate_drift(&window, 0)?;
        let z = est.max_z_score(drift.at(j))?;
        for p in 0..s.lattice.point_count() {
            let (m, se, k) = (est.mean.at(p), est.std_err.at(p), drift.at(j).at(p));
            for c in 0..m.upper().len() {
                drift_rows.push(vec![
                    j.to_string(),
                    num(s.grid.time(j)),
                    p.to_string(),
                    c.to_string(),
                    num(m.upper()[c]),
                    num(se.upper()[c]),
                    num(k.upper()[c]),
                ]);
            }
        }
        summary.push(DriftStep {
            step: j,
            t: s.grid.time(j),
            max_z_score: z,
            pass: z <= DRIFT_Z_LIMIT,
        });
    }
    out.write(
        "drift.csv",
        &table_csv(&["step", "t", "point_index", "component", "estimate", "std_err", "drift"], &drift_rows),
    )?;
    let pass = summary.iter().all(|d| d.pass);
    let worst = summary.iter().map(|d| d.max_z_score).fold(0.0, f64::max);
    out.write(
        "sde_summary.json",
        &json(&SdeSummary {
            samples: cfg.mc_samples,
            spd_exits,
            drift_samples: cfg.mc_samples,
            drift_steps: summary,
        }),
    )?;
    Ok(vec![Check::new(
        "drift_recovery",
        pass,
        format!("largest z-score {worst:.3} over {} steps, limit {DRIFT_Z_LIMIT}", steps.len()),
    )])
}

fn report_check(name: &str, r: &McReport) -> Check {
    Check::new(
        name,
        r.pass,
        format!("lhs {} rhs {} |diff| {:e} bound {:e}", num(r.lhs), num(r.rhs), (r.lhs - r.rhs).abs(), r.bound()),
    )
}

fn verify_ibp_cmd(cfg: &RunConfig, s: &Setup, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let exp = s.experiment(cfg, s.drift(cfg)?)?;
    let paths = sample_brownian(cfg.seed, cfg.mc_samples, s.basis.len(), s.grid)?;
    let slack = Slack {
        allowance: 0.0,
        rel_tol: if cfg.nu == 0.0 { DETERMINISTIC_IBP_REL_TOL } else { 0.0 },
    };
    let ibp = verify_ibp(&exp, &paths, slack)?.with_digest(cfg.digest());
    let mart = martingale_terms(&exp, &paths)?.with_digest(cfg.digest());
    out.write("report.json", &json(&ibp))?;
    out.write("martingale.json", &json(&mart))?;
    Ok(vec![report_check("integration_by_parts", &ibp), report_check("martingale_mean_zero", &mart)])
}

#[derive(Serialize)]
struct Contrast {
    perturbed: CriticalPointReport,
    critical_bound: f64,
    ratio: f64,
    required_ratio: f64,
    pass: bool,
}

fn verify_critical(cfg: &RunConfig, s: &Setup, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let drift = s.drift(cfg)?;
    let paths = sample_brownian(cfg.seed, cfg.mc_samples, s.basis.len(), s.grid)?;
    let exp = s.experiment(cfg, drift.clone())?;
    let mut a = verify_critical_point(&exp, &paths, cfg.delta_s)?;
    a.report = a.report.with_digest(cfg.digest());
    out.write("report.json", &json(&a.report))?;
    out.write("critical.json", &json(&a))?;
    let mut checks = vec![report_check("critical_point", &a.report)];

    let perturbation = s.perturbation(cfg)?;
    if !perturbation.is_zero() {
        let bumped = drift.add_scaled(1.0, &TimePath::constant(s.grid, &perturbation))?;
        let mut b = verify_critical_point(&s.experiment(cfg, bumped)?, &paths, cfg.delta_s)?;
        b.report = b.report.with_digest(cfg.digest());
        let bound = a.report.bound();
        let ratio = b.report.lhs.abs() / bound;
        let pass = ratio > CONTRAST_FACTOR;
        out.write(
            "contrast.json",
            &json(&Contrast {
                perturbed: b,
                critical_bound: bound,
                ratio,
                required_ratio: CONTRAST_FACTOR,
                pass,
            }),
        )?;
        checks.push(Check::new(
            "perturbed_contrast",
            pass,
            format!("|dJ/ds| of the perturbed drift is {ratio:.1} times the critical bound"),
        ));
    }
    Ok(checks)
}

fn strong_study(cfg: &RunConfig, s: &Setup, out: &mut OutputDir) -> Result<f64, AppError> {
    if s.grid.steps() % STRONG_FACTORS[0] != 0 {
        return Err(AppError::Config(ConfigError::Invalid {
            key: "dt",
            message: format!("the strong-convergence study needs a step count divisible by {}", STRONG_FACTORS[0]),
        }));
    }
    let drift = s.drift(cfg)?;
    let paths = sample_brownian(cfg.seed, cfg.strong_samples, s.basis.len(), s.grid)?;
    let r = verify_inverse_strong(&s.g0, &drift, &s.basis, cfg.nu, &paths, &STRONG_FACTORS)?;
    let rows: Vec<Vec<String>> = r
        .errors
        .iter()
        .zip(&r.std_errs)
        .map(|(&(dt, e), se)| vec![num(dt), num(e), num(*se), num(r.order)])
        .collect();
    out.write("convergence.csv", &table_csv(&["dt", "error", "std_err", "fitted_order"], &rows))?;
    out.write("strong.json", &json(&r))?;
    Ok(r.order)
}

fn verify_ito(cfg: &RunConfig, s: &Setup, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let order = strong_study(cfg, s, out)?;
    let drift = s.drift(cfg)?;
    let paths = sample_brownian(cfg.seed, cfg.mc_samples, s.basis.len(), s.grid)?;
    let vol = verify_volume_ito(&s.g0, &drift, &s.basis, cfg.nu, &paths)?.with_digest(cfg.digest());
    out.write("report.json", &json(&vol))?;
    Ok(vec![
        Check::new(
            "inverse_strong_order",
            order >= MIN_STRONG_ORDER,
            format!("fitted order {order:.3}, required {MIN_STRONG_ORDER}"),
        ),
        report_check("volume_ito", &vol),
    ])
}

fn convergence(cfg: &RunConfig, s: &Setup, out: &mut OutputDir) -> Result<Vec<Check>, AppError> {
    let (errors, min_order) = match cfg.convergence_kind {
        ConvergenceKind::Inverse => {
            let order = strong_study(cfg, s, out)?;
            return Ok(vec![Check::new(
                "convergence_order",
                order >= MIN_STRONG_ORDER,
                format!("fitted order {order:.3}, required {MIN_STRONG_ORDER}"),
            )]);
        }
        ConvergenceKind::Geodesic => {
            // dt is the coarsest step; the reference uses dt / 64.
            let end = |steps: usize| -> Result<TensorField, AppError> {
                let grid = TimeGrid::new(cfg.t_start, cfg.t_end, steps)?;
                Ok(integrate_geodesic(&s.g0, &s.velocity, &grid)?.0.last().clone())
            };
            let base = s.grid.steps();
            let reference = end(64 * base)?;
            let errors = [1, 2, 4, 8]
                .iter()
                .map(|m| {
                    let e = end(m * base)?.max_abs_diff(&reference)?;
                    Ok(((cfg.t_end - cfg.t_start) / (m * base) as f64, e))
                })
                .collect::<Result<Vec<_>, AppError>>()?;
            (errors, MIN_RK4_ORDER)
        }
        ConvergenceKind::Lie => {
            let errors = [8usize, 16, 32]
                .iter()
                .map(|&n| {
                    let lat = Lattice::torus(cfg.dimension, n)?;
                    let x = VectorField::from_fn(&lat, |c| -> Coords {
                        let mut v: Coords = smallvec::SmallVec::from_elem(0.0, cfg.dimension);
                        v[0] = c[0].sin();
                        v
                    })?;
                    let l = lie_derivative_metric(&x, &MetricField::identity(&lat))?;
                    let want = TensorField::from_fn(&lat, |c| {
                        let mut m = SymMat::zeros(cfg.dimension);
                        m.set(0, 0, 2.0 * c[0].cos());
                        m
                    })?;
                    Ok((lat.spacing(), l.max_abs_diff(&want)?))
                })
                .collect::<Result<Vec<_>, AppError>>()?;
            (errors, MIN_LIE_ORDER)
        }
    };
    let order = convergence_order(&errors)?;
    let rows: Vec<Vec<String>> = errors.iter().map(|&(dt, e)| vec![num(dt), num(e), num(order)]).collect();
    out.write("convergence.csv", &table_csv(&["dt", "error", "fitted_order"], &rows))?;
    Ok(vec![Check::new(
        "convergence_order",
        order >= min_order,
        format!("fitted order {order:.3}, required {min_order}"),
    )])
}
