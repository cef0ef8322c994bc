use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub time: Option<f64>,
    pub point: Option<usize>,
    pub min_eigenvalue: Option<f64>,
}

/// Record of one run. Everything except `wall_clock_seconds` is a function
/// of the command, the configuration and the seed.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: &'static str,
    pub exit_code: i32,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub config: BTreeMap<&'static str, String>,
    pub checks: Vec<Check>,
    pub failure: Option<Failure>,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";
