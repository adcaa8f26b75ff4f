//! Surrogate gradients that let a learner operating on an enlarged ball
//! drive proper decisions on the true domain.
//!
//! With `x = Π_𝒳[y]` the Euclidean projection of the core iterate, the
//! surrogate gradient
//!
//! ```text
//! ∇g = ∇f + ([−∇fᵀ(y − x)]₊ / ‖y − x‖²) · (y − x)
//! ```
//!
//! never exceeds `‖∇f‖` in norm and dominates the linearized regret:
//! `∇fᵀ(x − u) ≤ ∇gᵀ(y − u)` for every `u` in the domain. Both constants of
//! the conversion are 1; alternates with other `(c_f, c_g)` pairs could slot
//! in behind the same contract.

use ndarray::{Array1, ArrayView1};

use crate::projection::{euclidean_project, ConvexDomain};

/// Points closer than this are treated as coincident (`y` inside the
/// domain); the hinge numerator vanishes there too, so the surrogate
/// gradient reduces to `∇f`.
pub const COINCIDENT_TOL: f64 = 1e-14;

/// Surrogate gradient at `y`, given the true gradient at `x = Π_𝒳[y]`.
pub fn surrogate_gradient(
    grad_f: &ArrayView1<f64>,
    x: &ArrayView1<f64>,
    y: &ArrayView1<f64>,
) -> Array1<f64> {
    let diff = y - x;
    let dist_sq = diff.dot(&diff);
    if dist_sq.sqrt() < COINCIDENT_TOL {
        return grad_f.to_owned();
    }
    let hinge = (-grad_f.dot(&diff)).max(0.0);
    grad_f.to_owned() + &(&diff * (hinge / dist_sq))
}

/// The hinge multiplier `[−∇fᵀ(y − x)]₊ / ‖y − x‖²` (zero in the
/// coincident case). Exposed for diagnostics.
pub fn hinge_coefficient(
    grad_f: &ArrayView1<f64>,
    x: &ArrayView1<f64>,
    y: &ArrayView1<f64>,
) -> f64 {
    let diff = y - x;
    let dist_sq = diff.dot(&diff);
    if dist_sq.sqrt() < COINCIDENT_TOL {
        return 0.0;
    }
    (-grad_f.dot(&diff)).max(0.0) / dist_sq
}

/// Surrogate loss value at an arbitrary query point. Only used by tests;
/// the learners consume gradients exclusively.
pub fn surrogate_value(
    grad_f: &ArrayView1<f64>,
    x: &ArrayView1<f64>,
    y: &ArrayView1<f64>,
    query: &ArrayView1<f64>,
    domain: &ConvexDomain,
) -> f64 {
    let diff = y - x;
    let dist = diff.dot(&diff).sqrt();
    let linear = grad_f.dot(query);
    if dist < COINCIDENT_TOL {
        return linear;
    }
    let hinge = (-grad_f.dot(&diff)).max(0.0);
    let proj = euclidean_project(domain, query);
    let outside = (query - &proj).dot(&(query - &proj)).sqrt();
    linear + hinge / dist * outside
}
