//! Command-line driver: configuration, orchestration, output files and run
//! manifests for the `ebin` tool.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;
pub mod setup;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use config::{ConfigError, RunConfig};
use manifest::{Check, Failure, RunManifest, MANIFEST_FILE};
use output::{json, OutputDir};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Geodesic,
    El,
    Sde,
    VerifyIbp,
    VerifyCritical,
    VerifyIto,
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Geodesic => "geodesic",
            Command::El => "el",
            Command::Sde => "sde",
            Command::VerifyIbp => "verify-ibp",
            Command::VerifyCritical => "verify-critical",
            Command::VerifyIto => "verify-ito",
            Command::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ebin_core::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start thread pool: {0}")]
    Threads(String),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Threads(_) => EXIT_CONFIG,
            AppError::Core(ebin_core::Error::DegenerateMetric(_) | ebin_core::Error::NonFinite(_)) => EXIT_DEGENERATE,
            AppError::Core(_) => EXIT_CONFIG,
            AppError::Io { .. } => EXIT_IO,
        }
    }

    fn failure(&self) -> Failure {
        let d = match self {
            AppError::Core(e) => e.degeneracy(),
            _ => None,
        };
        Failure {
            kind: match self.exit_code() {
                EXIT_DEGENERATE => "degenerate_metric",
                EXIT_IO => "io",
                _ => "config",
            },
            message: self.to_string(),
            time: d.and_then(|d| d.time),
            point: d.and_then(|d| d.point),
            min_eigenvalue: d.map(|d| d.min_eigenvalue),
        }
    }
}

/// Overrides given on the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
}

pub struct Outcome {
    pub exit_code: i32,
    pub manifest: Option<RunManifest>,
    pub error: Option<AppError>,
    pub checks: Vec<Check>,
}

fn status(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_CHECK_FAILED => "check_failed",
        EXIT_CONFIG => "config_error",
        EXIT_DEGENERATE => "degenerate_metric",
        _ => "io_error",
    }
}

/// Loads the configuration, runs `cmd`, and writes the manifest last. The
/// manifest is written even when the run fails, as long as an output
/// directory is known.
pub fn execute(cmd: Command, config_path: &Path, overrides: &Overrides) -> Outcome {
    let start = Instant::now();
    let loaded = RunConfig::load(config_path).and_then(|mut c| {
        if let Some(seed) = overrides.seed {
            c.seed = seed;
        }
        if let Some(n) = overrides.samples {
            c.mc_samples = n;
            c.strong_samples = c.strong_samples.min(n);
        }
        if let Some(out) = &overrides.out {
            c.output_dir = out.clone();
        }
        c.validate()?;
        Ok(c)
    });
    let cfg = match loaded {
        Ok(c) => c,
        Err(e) => {
            let err = AppError::from(e);
            let mut manifest = None;
            if let Some(dir) = &overrides.out {
                let m = RunManifest {
                    command: cmd.name().to_string(),
                    status: status(EXIT_CONFIG),
                    exit_code: EXIT_CONFIG,
                    version: env!("CARGO_PKG_VERSION"),
                    seed: overrides.seed,
                    config_digest: None,
                    config: Default::default(),
                    checks: Vec::new(),
                    failure: Some(err.failure()),
                    files: Vec::new(),
                    wall_clock_seconds: start.elapsed().as_secs_f64(),
                };
                if let Err(io) = write_manifest(dir, &m) {
                    return Outcome {
                        exit_code: io.exit_code(),
                        manifest: Some(m),
                        error: Some(io),
                        checks: Vec::new(),
                    };
                }
                manifest = Some(m);
            }
            return Outcome {
                exit_code: EXIT_CONFIG,
                manifest,
                error: Some(err),
                checks: Vec::new(),
            };
        }
    };

    let mut out = match OutputDir::create(&cfg.output_dir) {
        Ok(o) => o,
        Err(e) => {
            return Outcome {
                exit_code: e.exit_code(),
                manifest: None,
                error: Some(e),
                checks: Vec::new(),
            }
        }
    };
    let result = commands::run(cmd, &cfg, &mut out);
    let (exit_code, checks, error) = match result {
        Ok(checks) => {
            let code = if checks.iter().all(|c| c.pass) { EXIT_OK } else { EXIT_CHECK_FAILED };
            (code, checks, None)
        }
        Err(e) => (e.exit_code(), Vec::new(), Some(e)),
    };
    let manifest = RunManifest {
        command: cmd.name().to_string(),
        status: status(exit_code),
        exit_code,
        version: env!("CARGO_PKG_VERSION"),
        seed: Some(cfg.seed),
        config_digest: Some(cfg.digest()),
        config: cfg.canonical(),
        checks: checks.clone(),
        failure: error.as_ref().map(AppError::failure),
        files: out.written().to_vec(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    if let Err(io) = write_manifest(out.path(), &manifest) {
        return Outcome {
            exit_code: io.exit_code(),
            manifest: Some(manifest),
            error: Some(io),
            checks,
        };
    }
    Outcome {
        exit_code,
        manifest: Some(manifest),
        error,
        checks,
    }
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, json(m)).map_err(|e| AppError::io(&path, e))
}
