//! Riemannian stochastic gradient descent with adaptive learning rates on
//! `V_k(R^m) × R^k × V_k(R^n)`, applied to regularized weighted low-rank
//! approximation (matrix completion).
//!
//! The crate is organised bottom-up:
//!
//! - [`manifold`]: Stiefel and product-manifold primitives (tangent
//!   projection, `qf` retraction, inner product, random points).
//! - [`wlra`]: the weighted low-rank approximation instance, its costs and
//!   per-entry stochastic gradients.
//! - [`sampling`]: alias-method sampling of observed entries.
//! - [`confinement`]: the confinement scalars (`kappa`, `rho0`, `rho1`,
//!   `beta`) and runtime confinement checks.
//! - [`optimizer`]: the adaptive and deterministic SGD loops.
//! - [`diagnostics`]: independent numerical oracles for every formula.
//! - [`cli_io`]: ingestion, synthetic data, config, metrics and plots.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod confinement;
pub mod diagnostics;
pub mod error;
pub mod manifold;
pub mod optimizer;
pub mod sampling;
pub mod wlra;

pub use error::{Error, Result};
