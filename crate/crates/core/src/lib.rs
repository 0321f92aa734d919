//! Simulation and numerical verification for the anisotropic (2+1)-dimensional
//! q-Whittaker growth model.
//!
//! Modules follow the layering of the computations: `qcore` holds the
//! q-functions and array types, `dynamics` the Markov chains, `contour` the
//! quadrature, `moments` the exact finite-q and LLN formulas, `fluctuations`
//! the Gaussian layer, `largetime` the diffusively rescaled system,
//! `asymptotics` the large-N closed forms and `harness` the experiment
//! runner.

// !(x > 0.0) is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod asymptotics;
pub mod contour;
pub mod dynamics;
pub mod error;
pub mod fluctuations;
pub mod harness;
pub mod largetime;
pub mod linalg;
pub mod moments;
pub mod ode;
pub mod qcore;
pub mod special;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use qcore::{InterlacingArray, ModelParams, Partition, Specialization};

/// Random source used by every sampler.
pub type SimRng = rand_chacha::ChaCha8Rng;
