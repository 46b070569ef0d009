//! Two-line insurance surplus model perturbed by independent diffusions,
//! with per-line claim streams and a common shock hitting both lines.
//!
//! The crate provides three routes to the minimum survival probability
//! (the probability that neither line is ruined) and the machinery to
//! cross-validate them:
//!
//! - [`simulate`]: exact-event Monte Carlo with Brownian-bridge crossing
//!   detection and reproducible counter-based path streams;
//! - [`kernel`] + [`solver`]: the closed-form killed transition kernel
//!   of the claim-free flow and a successive-substitution solver for the
//!   survival integral equation built on it;
//! - [`generator`]: finite-difference residuals of the governing
//!   integro-differential operator, applied to any candidate field.
//!
//! [`model`] holds the shared parameter containers, [`field`] the
//! discretized fields, [`closed_form`] the pure-diffusion references,
//! and [`quad`] the quadrature rules.

pub mod closed_form;
pub mod error;
pub mod field;
pub mod generator;
pub mod kernel;
pub mod model;
pub mod quad;
pub mod simulate;
pub mod solver;
pub mod util;

pub use error::{Error, Result};
pub use field::{Field, Field2d, FieldMetadata};
pub use generator::DriftConvention;
pub use kernel::{Kernel, KernelConstants};
pub use model::{ClaimDist, ModelParams, ValidationReport};
pub use simulate::{JumpEvent, LineOutcomes, McEstimate, PathOutcome, Rect};
pub use solver::{ConvergenceReport, SolverGrid};
