//! Scaled Block Vecchia (SBV) Gaussian-process emulation.
//!
//! The library approximates the log-likelihood of a zero-mean Gaussian
//! process by partitioning the inputs into small blocks, ordering the
//! blocks at random, and conditioning each block on its `m` nearest
//! previously-ordered points in an anisotropically scaled input space.
//! The same machinery drives prediction (blocks of test points
//! conditioned on training neighbors) and conditional simulation.
//!
//! Modules:
//! - [`kernel`]: scaled distances and Matérn covariances.
//! - [`exact`]: dense exact-GP oracle (likelihood, prediction, simulation).
//! - [`data`]: datasets, CSV ingestion, normalization.
//! - [`partition`]: worker partitioning, random anchor clustering, block ordering.
//! - [`nns`]: filtered exact m-nearest-neighbor search for block centers.
//! - [`distsim`]: deterministic in-process simulation of worker collectives.
//! - [`vecchia`]: batched blockwise likelihood, prediction, conditional simulation.
//! - [`estimate`]: maximum-likelihood fitting, KL divergence, error metrics.

pub mod data;
pub mod distsim;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod kernel;
pub mod linalg;
pub mod nns;
pub mod partition;
pub mod rng;
pub mod stats;
pub mod vecchia;

pub use error::{Error, Result};
pub use kernel::{CovMatrix, KernelParams};
