//! Numerical laboratory for the spiked matrix-tensor model.
//!
//! A rank-one signal `x*` on the sphere of radius `sqrt(N)` is observed
//! through a noisy symmetric matrix (noise variance `delta2`) and a noisy
//! symmetric order-3 tensor (noise variance `delta3`). This crate holds the
//! pure numerics:
//!
//! - [`model`]: instance generation, Hamiltonian, gradient and overlap.
//! - [`dynamics`]: finite-N Langevin and gradient-flow integration on the sphere.
//! - [`dmft`]: the closed two-time mean-field equations for `C`, `R`, `m`, `mu`.
//! - [`amp`]: approximate message passing, its state evolution and a phase proxy.
//! - [`theory`]: the growth exponent and the algorithmic threshold lines.
//! - [`extrapolate`]: threshold extraction from success times.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, ensembles and
//! the command line live in the companion `spiked` crate.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod amp;
pub mod dmft;
pub mod dynamics;
mod error;
pub mod extrapolate;
pub mod kernel;
pub mod model;
mod params;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use kernel::KernelQ;
pub use params::{ModelParams, MIN_DIMENSION};

/// Overlap used as the success criterion for time-to-solution measurements.
pub const SUCCESS_OVERLAP: f64 = 0.5;
