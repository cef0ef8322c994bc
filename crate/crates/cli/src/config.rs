//! Flat `key = value` run configuration.
//!
//! One assignment per line; `#` starts a comment. Every key is optional and
//! has a documented default, but unknown and repeated keys are errors: a
//! mistyped `nu` or `dt` must never silently fall back to a default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use ebin_core::tensor::{sym_len, SymMat};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

/// Which noise directions drive the process.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSpec {
    /// The `n(n+1)/2` elementary symmetric matrices at every point.
    Elementary,
    /// The single direction `g0`.
    Conformal,
    /// The `g0`-traceless parts of the elementary basis.
    Traceless,
    /// Random `g0`-traceless directions drawn from the run seed.
    TracelessRandom(usize),
    /// Lie derivatives `L_X g0` of the named vector fields.
    Lie(Vec<String>),
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::Elementary => f.write_str("elementary"),
            NoiseSpec::Conformal => f.write_str("conformal"),
            NoiseSpec::Traceless => f.write_str("traceless"),
            NoiseSpec::TracelessRandom(c) => write!(f, "traceless_random:{c}"),
            NoiseSpec::Lie(names) => write!(f, "lie:{}", names.join(",")),
        }
    }
}

/// Initial metric, optionally with a conformal initial velocity.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    /// `metric_scale * I`.
    Identity,
    /// `metric_scale * I` with initial velocity `a0 g0`.
    Conformal(f64),
    /// `metric_scale * I + scale * A A^T` with Gaussian `A` from the seed.
    RandomSpd(f64),
    /// A field file, CSV or binary, relative to the config file.
    File(PathBuf),
}

impl fmt::Display for InitialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialSpec::Identity => f.write_str("identity"),
            InitialSpec::Conformal(a) => write!(f, "conformal:{a:?}"),
            InitialSpec::RandomSpd(s) => write!(f, "random_spd:{s:?}"),
            InitialSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// A tensor that is the same at every lattice point, or read from a file.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorSpec {
    Zero,
    Constant(SymMat),
    File(PathBuf),
}

impl fmt::Display for TensorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorSpec::Zero => f.write_str("zero"),
            TensorSpec::Constant(m) => {
                let parts: Vec<String> = m.upper().iter().map(|v| format!("{v:?}")).collect();
                write!(f, "constant:{}", parts.join(","))
            }
            TensorSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriftSource {
    /// `K` from the modified Euler-Lagrange flow started at `velocity`.
    El,
    /// `K` constant in time, equal to `velocity`.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvergenceKind {
    /// RK4 geodesic endpoint error against a fine reference.
    Geodesic,
    /// Strong error of the inverse-metric SDE.
    Inverse,
    /// Lie derivative of the flat metric along `sin(x_1) e_1` over lattice sizes.
    Lie,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriftRuleSpec {
    Left,
    Trapezoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dimension: usize,
    pub lattice_points: usize,
    pub extent: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub nu: f64,
    pub amplitudes: Option<Vec<f64>>,
    pub noise_basis: NoiseSpec,
    pub initial: InitialSpec,
    pub metric_scale: f64,
    pub velocity: TensorSpec,
    pub variation: TensorSpec,
    pub perturbation: TensorSpec,
    pub drift_source: DriftSource,
    pub drift_rule: DriftRuleSpec,
    pub delta_s: f64,
    pub spd_floor: f64,
    pub mc_samples: usize,
    pub strong_samples: usize,
    pub drift_steps: usize,
    pub energy_tolerance: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub convergence_kind: ConvergenceKind,
    /// Directory that relative `file:` paths are resolved against.
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dimension: 3,
            lattice_points: 1,
            extent: 1.0,
            t_start: 0.0,
            t_end: 1.0,
            dt: 1e-3,
            nu: 0.0,
            amplitudes: None,
            noise_basis: NoiseSpec::Elementary,
            initial: InitialSpec::Identity,
            metric_scale: 1.0,
            velocity: TensorSpec::Zero,
            variation: TensorSpec::Zero,
            perturbation: TensorSpec::Zero,
            drift_source: DriftSource::El,
            drift_rule: DriftRuleSpec::Left,
            delta_s: 1e-3,
            spd_floor: ebin_core::tensor::DEFAULT_SPD_FLOOR,
            mc_samples: 10_000,
            strong_samples: 512,
            drift_steps: 5,
            energy_tolerance: 1e-6,
            seed: 0,
            output_dir: PathBuf::from("out"),
            convergence_kind: ConvergenceKind::Geodesic,
            base_dir: PathBuf::from("."),
        }
    }
}

pub const KEYS: &[&str] = &[
    "amplitudes",
    "convergence_kind",
    "delta_s",
    "dimension",
    "drift_rule",
    "drift_source",
    "drift_steps",
    "dt",
    "energy_tolerance",
    "extent",
    "initial",
    "lattice_points",
    "mc_samples",
    "metric_scale",
    "noise_basis",
    "nu",
    "output_dir",
    "perturbation",
    "seed",
    "spd_floor",
    "strong_samples",
    "t_end",
    "t_start",
    "variation",
    "velocity",
];

/// Splits the text into `(line, key, value)` triples.
fn assignments(text: &str) -> Result<Vec<(usize, &str, &str)>, ConfigError> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("`{key}` has no value"),
            });
        }
        if seen.insert(key, line).is_some() {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        out.push((line, key, value));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &'static str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| invalid(key, format!("`{v}` is not a valid number")))
}

fn parse_f64(key: &'static str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = parse_num(key, v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(key, "must be finite"))
    }
}

fn parse_list(key: &'static str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|p| parse_f64(key, p.trim())).collect()
}

fn parse_tensor(key: &'static str, v: &str) -> Result<TensorSpec, ConfigError> {
    if v == "zero" {
        return Ok(TensorSpec::Zero);
    }
    if let Some(rest) = v.strip_prefix("constant:") {
        let upper = parse_list(key, rest)?;
        let n = ebin_core::tensor::dim_from_sym_len(upper.len())
            .ok_or_else(|| invalid(key, format!("{} components is not n(n+1)/2", upper.len())))?;
        return SymMat::from_upper(n, &upper)
            .map(TensorSpec::Constant)
            .map_err(|e| invalid(key, e.to_string()));
    }
    if let Some(rest) = v.strip_prefix("file:") {
        return Ok(TensorSpec::File(PathBuf::from(rest)));
    }
    Err(invalid(key, format!("expected zero, constant:<components> or file:<path>, found `{v}`")))
}

fn parse_noise(v: &str) -> Result<NoiseSpec, ConfigError> {
    const KEY: &str = "noise_basis";
    match v {
        "elementary" => return Ok(NoiseSpec::Elementary),
        "conformal" => return Ok(NoiseSpec::Conformal),
        "traceless" => return Ok(NoiseSpec::Traceless),
        "traceless_random" => return Ok(NoiseSpec::TracelessRandom(0)),
        _ => {}
    }
    if let Some(rest) = v.strip_prefix("traceless_random:") {
        let count: usize = parse_num(KEY, rest)?;
        if count == 0 {
            return Err(invalid(KEY, "traceless_random needs at least one element"));
        }
        return Ok(NoiseSpec::TracelessRandom(count));
    }
    if let Some(rest) = v.strip_prefix("lie:") {
        let names: Vec<String> = rest.split(',').map(|s| s.trim().to_string()).collect();
        if names.iter().any(String::is_empty) {
            return Err(invalid(KEY, "empty vector field name"));
        }
        return Ok(NoiseSpec::Lie(names));
    }
    Err(invalid(KEY, format!("unknown noise basis `{v}`")))
}

fn parse_initial(v: &str) -> Result<InitialSpec, ConfigError> {
    const KEY: &str = "initial";
    if v == "identity" {
        return Ok(InitialSpec::Identity);
    }
    if let Some(rest) = v.strip_prefix("conformal:") {
        return Ok(InitialSpec::Conformal(parse_f64(KEY, rest)?));
    }
    if let Some(rest) = v.strip_prefix("random_spd:") {
        let s = parse_f64(KEY, rest)?;
        if s < 0.0 {
            return Err(invalid(KEY, "random_spd scale must be nonnegative"));
        }
        return Ok(InitialSpec::RandomSpd(s));
    }
    if let Some(rest) = v.strip_prefix("file:") {
        return Ok(InitialSpec::File(PathBuf::from(rest)));
    }
    Err(invalid(KEY, format!("unknown initial data `{v}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        let mut extent_set = false;
        for (_, key, v) in assignments(text)? {
            match key {
                "dimension" => c.dimension = parse_num("dimension", v)?,
                "lattice_points" => c.lattice_points = parse_num("lattice_points", v)?,
                "extent" => {
                    c.extent = parse_f64("extent", v)?;
                    extent_set = true;
                }
                "t_start" => c.t_start = parse_f64("t_start", v)?,
                "t_end" => c.t_end = parse_f64("t_end", v)?,
                "dt" => c.dt = parse_f64("dt", v)?,
                "nu" => c.nu = parse_f64("nu", v)?,
                "amplitudes" => c.amplitudes = Some(parse_list("amplitudes", v)?),
                "noise_basis" => c.noise_basis = parse_noise(v)?,
                "initial" => c.initial = parse_initial(v)?,
                "metric_scale" => c.metric_scale = parse_f64("metric_scale", v)?,
                "velocity" => c.velocity = parse_tensor("velocity", v)?,
                "variation" => c.variation = parse_tensor("variation", v)?,
                "perturbation" => c.perturbation = parse_tensor("perturbation", v)?,
                "drift_source" => {
                    c.drift_source = match v {
                        "el" => DriftSource::El,
                        "constant" => DriftSource::Constant,
                        _ => return Err(invalid("drift_source", "expected el or constant")),
                    }
                }
                "drift_rule" => {
                    c.drift_rule = match v {
                        "left" => DriftRuleSpec::Left,
                        "trapezoid" => DriftRuleSpec::Trapezoid,
                        _ => return Err(invalid("drift_rule", "expected left or trapezoid")),
                    }
                }
                "delta_s" => c.delta_s = parse_f64("delta_s", v)?,
                "spd_floor" => c.spd_floor = parse_f64("spd_floor", v)?,
                "mc_samples" => c.mc_samples = parse_num("mc_samples", v)?,
                "strong_samples" => c.strong_samples = parse_num("strong_samples", v)?,
                "drift_steps" => c.drift_steps = parse_num("drift_steps", v)?,
                "energy_tolerance" => c.energy_tolerance = parse_f64("energy_tolerance", v)?,
                "seed" => c.seed = parse_num("seed", v)?,
                "output_dir" => c.output_dir = PathBuf::from(v),
                "convergence_kind" => {
                    c.convergence_kind = match v {
                        "geodesic" => ConvergenceKind::Geodesic,
                        "inverse" => ConvergenceKind::Inverse,
                        "lie" => ConvergenceKind::Lie,
                        _ => return Err(invalid("convergence_kind", "expected geodesic, inverse or lie")),
                    }
                }
                _ => unreachable!("key list and match arms agree"),
            }
        }
        if !extent_set && c.lattice_points > 1 {
            c.extent = std::f64::consts::TAU;
        }
        if let NoiseSpec::TracelessRandom(0) = c.noise_basis {
            c.noise_basis = NoiseSpec::TracelessRandom(sym_len(c.dimension).saturating_sub(1).max(1));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut c = Self::parse(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dimension == 0 || self.dimension > 16 {
            return Err(invalid("dimension", "must be between 1 and 16"));
        }
        if self.lattice_points == 0 {
            return Err(invalid("lattice_points", "must be at least 1"));
        }
        let points = (self.lattice_points as u128).checked_pow(self.dimension as u32);
        if points.map_or(true, |p| p > 1 << 24) {
            return Err(invalid("lattice_points", "lattice has too many points"));
        }
        if !(self.extent > 0.0) {
            return Err(invalid("extent", "must be positive"));
        }
        if !(self.t_start < self.t_end) {
            return Err(invalid("t_end", "must exceed t_start"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        let ratio = (self.t_end - self.t_start) / self.dt;
        if ratio > 1e8 || (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(invalid("dt", "must divide t_end - t_start into at most 1e8 steps"));
        }
        if self.nu < 0.0 {
            return Err(invalid("nu", "must be nonnegative"));
        }
        if let Some(a) = &self.amplitudes {
            if a.iter().any(|x| *x < 0.0) {
                return Err(invalid("amplitudes", "must be nonnegative"));
            }
        }
        if !(self.metric_scale > 0.0) {
            return Err(invalid("metric_scale", "must be positive"));
        }
        if matches!(self.initial, InitialSpec::Conformal(_)) && self.velocity != TensorSpec::Zero {
            return Err(invalid("velocity", "conflicts with initial = conformal:<a0>"));
        }
        for (key, t) in [
            ("velocity", &self.velocity),
            ("variation", &self.variation),
            ("perturbation", &self.perturbation),
        ] {
            if let TensorSpec::Constant(m) = t {
                if m.dim() != self.dimension {
                    return Err(ConfigError::Invalid {
                        key,
                        message: format!("has dimension {} but the run has {}", m.dim(), self.dimension),
                    });
                }
            }
        }
        if !(self.delta_s > 0.0) {
            return Err(invalid("delta_s", "must be positive"));
        }
        if !(self.spd_floor > 0.0) {
            return Err(invalid("spd_floor", "must be positive"));
        }
        if self.mc_samples < 2 {
            return Err(invalid("mc_samples", "must be at least 2"));
        }
        if self.strong_samples < 2 {
            return Err(invalid("strong_samples", "must be at least 2"));
        }
        if self.drift_steps == 0 {
            return Err(invalid("drift_steps", "must be at least 1"));
        }
        if !(self.energy_tolerance >= 0.0) {
            return Err(invalid("energy_tolerance", "must be nonnegative"));
        }
        Ok(())
    }

    /// Number of steps of the time grid.
    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    /// Every experiment parameter as `key -> canonical value`. `output_dir`
    /// is where results go, not part of the experiment, and is left out.
    pub fn canonical(&self) -> BTreeMap<&'static str, String> {
        let f = |x: f64| format!("{x:?}");
        let mut m = BTreeMap::new();
        m.insert(
            "amplitudes",
            match &self.amplitudes {
                None => "uniform".to_string(),
                Some(a) => a.iter().map(|x| f(*x)).collect::<Vec<_>>().join(","),
            },
        );
        m.insert(
            "convergence_kind",
            match self.convergence_kind {
                ConvergenceKind::Geodesic => "geodesic",
                ConvergenceKind::Inverse => "inverse",
                ConvergenceKind::Lie => "lie",
            }
            .to_string(),
        );
        m.insert("delta_s", f(self.delta_s));
        m.insert("dimension", self.dimension.to_string());
        m.insert(
            "drift_rule",
            match self.drift_rule {
                DriftRuleSpec::Left => "left",
                DriftRuleSpec::Trapezoid => "trapezoid",
            }
            .to_string(),
        );
        m.insert(
            "drift_source",
            match self.drift_source {
                DriftSource::El => "el",
                DriftSource::Constant => "constant",
            }
            .to_string(),
        );
        m.insert("drift_steps", self.drift_steps.to_string());
        m.insert("dt", f(self.dt));
        m.insert("energy_tolerance", f(self.energy_tolerance));
        m.insert("extent", f(self.extent));
        m.insert("initial", self.initial.to_string());
        m.insert("lattice_points", self.lattice_points.to_string());
        m.insert("mc_samples", self.mc_samples.to_string());
        m.insert("metric_scale", f(self.metric_scale));
        m.insert("noise_basis", self.noise_basis.to_string());
        m.insert("nu", f(self.nu));
        m.insert("perturbation", self.perturbation.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("spd_floor", f(self.spd_floor));
        m.insert("strong_samples", self.strong_samples.to_string());
        m.insert("t_end", f(self.t_end));
        m.insert("t_start", f(self.t_start));
        m.insert("variation", self.variation.to_string());
        m.insert("velocity", self.velocity.to_string());
        m
    }

    /// Hex SHA-256 of the canonical `key=value` lines.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_comments() {
        let c = RunConfig::parse("# nothing here\n\n  nu = 0.25  # trailing\n").unwrap();
        assert_eq!(c.nu, 0.25);
        assert_eq!(c.dimension, 3);
        assert_eq!(c.steps(), 1000);
        assert_eq!(c.extent, 1.0);
        let c = RunConfig::parse("lattice_points = 4").unwrap();
        assert_eq!(c.extent, std::f64::consts::TAU);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert_eq!(
            RunConfig::parse("nu = 0.1\nnu_typo = 3").unwrap_err(),
            ConfigError::UnknownKey {
                line: 2,
                key: "nu_typo".into()
            }
        );
        assert!(matches!(
            RunConfig::parse("nu = 0.1\nnu = 0.2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(RunConfig::parse("nu 0.1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::parse("nu ="), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn rejects_invalid_values() {
        for bad in [
            "nu = -1",
            "dt = 0",
            "dt = 0.3",
            "lattice_points = 0",
            "mc_samples = 1",
            "t_end = 0",
            "nu = nan",
            "noise_basis = nope",
            "initial = conformal:x",
            "velocity = constant:1,2",
            "dimension = 2\nvelocity = constant:1,0,0,1,0,1",
            "initial = conformal:1\nvelocity = constant:1,0,0,1,0,1",
            "seed = -3",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "accepted `{bad}`");
        }
    }

    #[test]
    fn selectors_parse() {
        let c = RunConfig::parse(
            "noise_basis = lie:sin1, shear12\ninitial = random_spd:0.5\nvelocity = constant:1,0,0,1,0,1",
        )
        .unwrap();
        assert_eq!(c.noise_basis, NoiseSpec::Lie(vec!["sin1".into(), "shear12".into()]));
        assert_eq!(c.initial, InitialSpec::RandomSpd(0.5));
        assert_eq!(c.velocity, TensorSpec::Constant(SymMat::identity(3)));
        let c = RunConfig::parse("noise_basis = traceless_random").unwrap();
        assert_eq!(c.noise_basis, NoiseSpec::TracelessRandom(5));
    }

    #[test]
    fn digest_tracks_experiment_parameters_only() {
        let a = RunConfig::parse("nu = 0.1").unwrap();
        let b = RunConfig::parse("# same\nnu = 0.10\noutput_dir = elsewhere").unwrap();
        let c = RunConfig::parse("nu = 0.1\nseed = 1").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
