//! Correction of zero-inflated, error-prone functional covariates and joint
//! scalar-on-function quantile regression.
//!
//! The pipeline has two stages. Stage one ([`zicorrect`]) recovers latent
//! subject curves from replicated count trajectories by alternating between
//! a zero-inflation adjustment, basis projection with per-coefficient
//! random-intercept models, and a segment-wise maximum-likelihood update of
//! the zero-inflation probabilities. Stage two ([`quantreg`]) regresses a
//! scalar outcome on the recovered basis coefficients at several quantile
//! levels, optionally jointly under non-crossing constraints.

pub mod basis;
pub mod config;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod inference;
pub mod mixedmodels;
pub mod quantreg;
pub mod rng;
pub mod simlab;
pub mod zicorrect;

pub(crate) mod par;

pub use basis::{make_basis, BasisKind, BasisSystem};
pub use config::RunConfig;
pub use dataset::{ReplicatedFunctionalDataset, ScalarCovariates, Violation};
pub use error::{Error, Result};
pub use grid::{Closure, Segmentation, TimeGrid};
