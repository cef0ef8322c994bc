//! Turns a [`RunConfig`] into the core library's inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use smallvec::SmallVec;

use ebin_core::dynamics::{integrate_el, TimeGrid, TimePath};
use ebin_core::field::codec::{decode_binary, decode_csv, BINARY_MAGIC};
use ebin_core::field::{make_basis_elementary, Coords, Lattice, MetricField, NoiseBasis, TensorField, VectorField};
use ebin_core::tensor::SymMat;
use ebin_core::verify::Experiment;

use crate::config::{ConfigError, DriftSource, InitialSpec, NoiseSpec, RunConfig, TensorSpec};
use crate::AppError;

// Keeps the initial-data stream apart from the Brownian streams of the same seed.
const INITIAL_STREAM: u64 = u64::MAX;
const NOISE_STREAM: u64 = u64::MAX - 1;

pub struct Setup {
    pub lattice: Lattice,
    pub grid: TimeGrid,
    pub g0: MetricField,
    /// Initial velocity for the deterministic flows.
    pub velocity: TensorField,
    pub basis: NoiseBasis,
}

fn bad(key: &'static str, message: impl Into<String>) -> AppError {
    AppError::Config(ConfigError::Invalid {
        key,
        message: message.into(),
    })
}

fn read_field(cfg: &RunConfig, key: &'static str, path: &std::path::Path, lattice: &Lattice) -> Result<TensorField, AppError> {
    let full = cfg.resolve(path);
    let bytes = std::fs::read(&full).map_err(|e| bad(key, format!("cannot read {}: {e}", full.display())))?;
    let field = if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| bad(key, "field file is neither binary nor UTF-8 CSV"))?;
        decode_csv(&text, cfg.extent)
    }
    .map_err(|e| bad(key, format!("{}: {e}", full.display())))?;
    if field.lattice() != lattice {
        return Err(bad(
            key,
            format!(
                "{} holds a {}-dimensional field with {} points per axis, the run needs {} and {}",
                full.display(),
                field.lattice().dim(),
                field.lattice().points_per_axis(),
                lattice.dim(),
                lattice.points_per_axis()
            ),
        ));
    }
    Ok(field)
}

fn tensor(cfg: &RunConfig, key: &'static str, spec: &TensorSpec, lattice: &Lattice) -> Result<TensorField, AppError> {
    match spec {
        TensorSpec::Zero => Ok(TensorField::zeros(lattice)),
        TensorSpec::Constant(m) => Ok(TensorField::constant(lattice, m)),
        TensorSpec::File(p) => read_field(cfg, key, p, lattice),
    }
}

fn random_spd(lattice: &Lattice, base: f64, scale: f64, seed: u64) -> TensorField {
    let n = lattice.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INITIAL_STREAM);
    let values = (0..lattice.point_count())
        .map(|_| {
            let a: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
            SymMat::from_fn(n, |i, j| {
                let aat: f64 = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum();
                scale * aat + if i == j { base } else { 0.0 }
            })
        })
        .collect();
    TensorField::from_values(lattice.clone(), values).expect("values match the lattice")
}

/// `sinA`: `sin(x_A) e_A`; `cosA`: `cos(x_A) e_A`; `shearAB`: `sin(x_B) e_A`.
/// Axes are numbered from 1.
fn named_vector_field(name: &str, lattice: &Lattice) -> Result<VectorField, AppError> {
    let n = lattice.dim();
    let axis = |s: &str| -> Option<usize> {
        let a: usize = s.parse().ok()?;
        (1..=n).contains(&a).then_some(a - 1)
    };
    let unknown = || bad("noise_basis", format!("unknown vector field `{name}` (expected sinA, cosA or shearAB)"));
    let (target, source, f): (usize, usize, fn(f64) -> f64) = if let Some(r) = name.strip_prefix("sin") {
        let a = axis(r).ok_or_else(unknown)?;
        (a, a, f64::sin)
    } else if let Some(r) = name.strip_prefix("cos") {
        let a = axis(r).ok_or_else(unknown)?;
        (a, a, f64::cos)
    } else if let Some(r) = name.strip_prefix("shear") {
        if r.len() != 2 {
            return Err(unknown());
        }
        (axis(&r[..1]).ok_or_else(unknown)?, axis(&r[1..]).ok_or_else(unknown)?, f64::sin)
    } else {
        return Err(unknown());
    };
    Ok(VectorField::from_fn(lattice, |x| -> Coords {
        let mut c: Coords = SmallVec::from_elem(0.0, n);
        c[target] = f(x[source]);
        c
    })?)
}

fn noise_basis(cfg: &RunConfig, lattice: &Lattice, g0: &MetricField) -> Result<NoiseBasis, AppError> {
    let n = cfg.dimension;
    let basis = match &cfg.noise_basis {
        NoiseSpec::Elementary => make_basis_elementary(lattice, n)?,
        NoiseSpec::Conformal => NoiseBasis::conformal(g0),
        NoiseSpec::Traceless => NoiseBasis::traceless(g0, &make_basis_elementary(lattice, n)?)?,
        NoiseSpec::TracelessRandom(count) => NoiseBasis::traceless_random(g0, *count, cfg.seed ^ NOISE_STREAM)?,
        NoiseSpec::Lie(names) => {
            if lattice.points_per_axis() < 4 {
                return Err(bad("noise_basis", "Lie derivative noise needs lattice_points >= 4"));
            }
            let fields = names
                .iter()
                .map(|name| named_vector_field(name, lattice))
                .collect::<Result<Vec<_>, _>>()?;
            NoiseBasis::lie(g0, &fields)?
        }
    };
    match &cfg.amplitudes {
        None => Ok(basis),
        Some(a) if a.len() == basis.len() => Ok(basis.with_amplitudes(a.clone())?),
        Some(a) => Err(bad(
            "amplitudes",
            format!("{} amplitudes for a basis of {} elements", a.len(), basis.len()),
        )),
    }
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self, AppError> {
        let lattice = Lattice::new(cfg.dimension, cfg.lattice_points, cfg.extent)?;
        let grid = TimeGrid::new(cfg.t_start, cfg.t_end, cfg.steps())?;
        let s = cfg.metric_scale;
        let g0t = match &cfg.initial {
            InitialSpec::Identity | InitialSpec::Conformal(_) => {
                TensorField::constant(&lattice, &SymMat::scaled_identity(cfg.dimension, s))
            }
            InitialSpec::RandomSpd(scale) => random_spd(&lattice, s, *scale, cfg.seed),
            InitialSpec::File(p) => read_field(cfg, "initial", p, &lattice)?,
        };
        let g0 = MetricField::new(&g0t, cfg.spd_floor)?;
        let velocity = match cfg.initial {
            InitialSpec::Conformal(a0) => g0t.scale(a0),
            _ => tensor(cfg, "velocity", &cfg.velocity, &lattice)?,
        };
        let basis = noise_basis(cfg, &lattice, &g0)?;
        Ok(Self {
            lattice,
            grid,
            g0,
            velocity,
            basis,
        })
    }

    /// The drift path `K(t)` of the stochastic process.
    pub fn drift(&self, cfg: &RunConfig) -> Result<TimePath, AppError> {
        match cfg.drift_source {
            DriftSource::Constant => Ok(TimePath::constant(self.grid, &self.velocity)),
            DriftSource::El => {
                let (_, k) = integrate_el(&self.g0, &self.velocity, &self.basis, cfg.nu, &self.grid)?;
                Ok(k)
            }
        }
    }

    /// `V(t) = 4 (t - a)(b - t) / (b - a)^2 * M` for the configured `M`,
    /// which vanishes at both ends.
    pub fn variation(&self, cfg: &RunConfig) -> Result<TimePath, AppError> {
        let m = tensor(cfg, "variation", &cfg.variation, &self.lattice)?;
        let (a, b) = (self.grid.start(), self.grid.end());
        Ok(TimePath::from_fn(self.grid, |t| {
            let bump = if t == a || t == b { 0.0 } else { 4.0 * (t - a) * (b - t) / ((b - a) * (b - a)) };
            m.scale(bump)
        })?)
    }

    pub fn perturbation(&self, cfg: &RunConfig) -> Result<TensorField, AppError> {
        tensor(cfg, "perturbation", &cfg.perturbation, &self.lattice)
    }

    pub fn experiment(&self, cfg: &RunConfig, drift: TimePath) -> Result<Experiment, AppError> {
        Ok(Experiment {
            g0: self.g0.clone(),
            drift,
            variation: self.variation(cfg)?,
            basis: self.basis.clone(),
            nu: cfg.nu,
        })
    }
}
