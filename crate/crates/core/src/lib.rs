//! Truncated Euler–Maruyama integration of super-linear stochastic
//! differential delay equations with Poisson jumps:
//!
//! ```text
//! dx(t) = f(x(t), x(t-τ)) dt + g(x(t), x(t-τ)) dB(t) + h(x(t-), x((t-τ)-)) dN(t),
//! ```
//!
//! together with a Monte Carlo harness that couples solutions at several step
//! sizes on one realized noise path, estimates strong L^p errors, fits
//! convergence orders and falsifies the structural coefficient conditions by
//! sampling.
//!
//! Module map:
//! - [`model`]: problem instances and the structural constants they claim.
//! - [`truncation`]: growth envelope φ, α(Δ), the projection π_Δ and truncated
//!   coefficients.
//! - [`noise`]: counter-based Brownian/Poisson increment bundles and exact
//!   aggregation to coarser grids.
//! - [`scheme`]: truncated EM (two regimes), plain EM, and both interpolants.
//! - [`analysis`]: strong errors, rate regression, moments, assumption checks.
//! - [`experiment`]: JSON-configured batch experiments used by the CLI.

// NaN must fail every validity test, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod scheme;
pub mod truncation;

pub use error::{Error, Result};
pub use model::{AssumptionConstants, Coefficients, InitialSegment, ModelSpec};
pub use noise::{Increments, NoiseBundle, NoiseKey};
pub use scheme::{SchemeKind, SolutionPath, StepSize};
pub use truncation::{Phi, Regime, TruncationConfig, TruncationLevel};
