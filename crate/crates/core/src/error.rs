use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("fields are defined on different lattices")]
    LatticeMismatch,

    /// The metric left the open cone of positive-definite matrices.
    #[error("degenerate metric: {0}")]
    DegenerateMetric(Degeneracy),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Where and how badly a metric failed the SPD floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degeneracy {
    pub min_eigenvalue: f64,
    pub time: Option<f64>,
    pub point: Option<usize>,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "minimum eigenvalue {:e}", self.min_eigenvalue)?;
        if let Some(p) = self.point {
            write!(f, " at lattice point {p}")?;
        }
        if let Some(t) = self.time {
            write!(f, " at t = {t}")?;
        }
        Ok(())
    }
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }

    /// Attach a lattice point to a degeneracy error; other errors pass through.
    pub(crate) fn at_point(self, point: usize) -> Self {
        match self {
            Error::DegenerateMetric(d) => Error::DegenerateMetric(Degeneracy {
                point: Some(point),
                ..d
            }),
            e => e,
        }
    }

    /// Attach a simulation time to a degeneracy error; other errors pass through.
    pub fn at_time(self, time: f64) -> Self {
        match self {
            Error::DegenerateMetric(d) => Error::DegenerateMetric(Degeneracy {
                time: Some(time),
                ..d
            }),
            e => e,
        }
    }

    pub fn degeneracy(&self) -> Option<&Degeneracy> {
        match self {
            Error::DegenerateMetric(d) => Some(d),
            _ => None,
        }
    }
}
