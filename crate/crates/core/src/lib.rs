//! Deterministic and stochastically perturbed geodesics on the manifold of
//! Riemannian metrics with the Ebin `L^2` metric, and Monte Carlo checks of
//! the associated stochastic calculus.
//!
//! Metrics live on a periodic lattice ([`field::Lattice`]); every pointwise
//! operation works on symmetric `n x n` matrices ([`tensor::SymMat`]) and
//! every metric carries a certified inverse ([`tensor::SpdMat`]).

pub mod dynamics;
pub mod error;
pub mod field;
pub mod stats;
pub mod tensor;
pub mod verify;

pub use error::{Degeneracy, Error, Result};
