//! Numerical laboratory for the TAP complexity of mixed p-spin Ising spin glasses.
//!
//! The crate solves the Parisi PDE for atomic order parameters, evaluates TAP and
//! Parisi functionals, simulates the Auffinger–Chen diffusion, computes free
//! convolutions with the semicircle law, and exposes the Gaussian covariance
//! algebra behind the Kac–Rice densities.

#![allow(clippy::needless_range_loop)]

pub mod ac_sde;
pub mod error;
pub mod field_mc;
pub mod freeprob;
pub mod functionals;
pub mod gaussian_geometry;
pub mod measures;
pub mod mixture;
pub mod parisi_pde;
pub mod quadrature;
pub mod transition;
pub mod variational;

pub use error::{Error, Result};
pub use measures::{dist, AtomicMeasure, PrefixSpec};
pub use mixture::Mixture;
pub use parisi_pde::{solve, solve_with_splits, GridSpec, Legendre, ParisiSolution};
