//! Online exp-concave optimization with infrequent Mahalanobis projections.
//!
//! This crate implements LightONS, a variant of Online Newton Step that
//! delays the expensive Mahalanobis projection until the iterate leaves an
//! expanded ball of radius `k·D/2`, together with the numerical kernels the
//! algorithm rests on and an experiment harness:
//!
//! - [`linalg`] — paired matrix/inverse rank-one maintenance, Householder
//!   tridiagonalization, shifted tridiagonal solves, and slow exact oracles
//!   used by tests.
//! - [`projection`] — Euclidean projections onto simple domains and a
//!   bisection-based approximate Mahalanobis-ball projection with a
//!   certified error bound.
//! - [`conversion`] — the surrogate-gradient construction that turns the
//!   improper core learner into a proper one.
//! - [`learners`] — the ONS baseline, the hysteresis core, and the full
//!   proper learner, plus the projection-budget and regret-bound auditors.
//! - [`sketch`] — a frequent-directions variant that keeps a `2d'×d` sketch
//!   in place of the full `d×d` preconditioner.
//! - [`tasks`] — seeded folded-Gaussian loss streams (linear and logistic
//!   regression), the offline comparator, and online-to-batch conversion.
//! - [`harness`] — experiment configuration, per-run audits, and CSV output.
//!
//! Independent experiment runs are data-parallel; the `parallel` feature
//! (default on) executes them with rayon, and [`exec::map_indexed`] falls
//! back to a sequential loop when the feature is disabled.

pub mod conversion;
pub mod exec;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod projection;
pub mod sketch;
pub mod tasks;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A vector or matrix has the wrong dimension for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A factorization or solve broke down (non-SPD input, vanishing pivot).
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use harness::{ExperimentConfig, RunSummary};
pub use learners::{LearnerConfig, LearnerState, Variant};
pub use projection::{ConvexDomain, ProjectionRequest};
pub use tasks::{StreamConfig, Task};
