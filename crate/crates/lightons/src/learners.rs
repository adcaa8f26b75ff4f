//! Online learner state machines.
//!
//! Three variants share one preconditioned mirror-descent update
//! `x̂ = x − (1/γ)·A⁻¹·∇` and differ in when and where they project:
//!
//! - [`Variant::Ons`] — the classical baseline: project onto the domain
//!   (Mahalanobis metric) the moment the iterate leaves it.
//! - [`Variant::Core`] — projection hysteresis: accept iterates up to the
//!   expanded-ball radius `k·D/2` and only then project onto the domain.
//!   Improper: emitted decisions may lie outside the domain.
//! - [`Variant::Full`] — the proper learner: the core update runs on
//!   surrogate gradients, Mahalanobis projections target the ball `B(D/2)`,
//!   and the emitted decision is the Euclidean projection of the core
//!   iterate onto the domain.

use ndarray::{Array1, ArrayView1};

use crate::conversion::surrogate_gradient;
use crate::linalg::{PdPair, DEGENERATE_GRAD_TOL};
use crate::projection::{
    euclidean_project, fast_proj, mahalanobis_project_iterative, Backend, ConvexDomain,
    ProjectionRequest,
};
use crate::{Error, Result};

/// Which update/projection rule the learner runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ons,
    Core,
    Full,
}

/// Static learner parameters.
///
/// `diameter` is always derived from the domain so the two cannot drift
/// apart. `hysteresis` defaults to 2, the sweet spot of the regret/projection
/// trade-off; it is ignored by the ONS variant. The conversion constants
/// `c_f`, `c_g` are both 1 for the shipped surrogate-gradient construction.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub variant: Variant,
    pub dim: usize,
    pub domain: ConvexDomain,
    pub diameter: f64,
    pub grad_bound: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub hysteresis: f64,
    pub c_f: f64,
    pub c_g: f64,
    pub refresh_every: Option<usize>,
}

impl LearnerConfig {
    pub fn new(
        variant: Variant,
        dim: usize,
        domain: ConvexDomain,
        grad_bound: f64,
        alpha: f64,
        epsilon: f64,
    ) -> Self {
        let diameter = domain.diameter();
        Self {
            variant,
            dim,
            domain,
            diameter,
            grad_bound,
            alpha,
            epsilon,
            hysteresis: 2.0,
            c_f: 1.0,
            c_g: 1.0,
            refresh_every: None,
        }
    }

    pub fn with_hysteresis(mut self, k: f64) -> Self {
        self.hysteresis = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be >= 1".into()));
        }
        for (name, v) in [
            ("diameter", self.diameter),
            ("grad_bound", self.grad_bound),
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.variant != Variant::Ons && !(self.hysteresis > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "hysteresis coefficient must exceed 1, got {}",
                self.hysteresis
            )));
        }
        if self.c_f < 1.0 || self.c_g < 1.0 {
            return Err(Error::InvalidArgument(
                "conversion constants must be >= 1".into(),
            ));
        }
        let dd = self.domain.diameter();
        if (dd - self.diameter).abs() > 1e-9 * self.diameter.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "diameter {} inconsistent with domain diameter {dd}",
                self.diameter
            )));
        }
        Ok(())
    }

    /// Curvature step parameter for the configured variant.
    pub fn gamma(&self) -> Result<f64> {
        match self.variant {
            Variant::Ons => gamma_ons(self.diameter, self.grad_bound, self.alpha),
            Variant::Core => gamma_core(
                self.diameter,
                self.grad_bound,
                self.alpha,
                self.hysteresis,
            ),
            Variant::Full => gamma_prime(
                self.diameter,
                self.grad_bound,
                self.alpha,
                self.hysteresis,
                self.c_f,
                self.c_g,
            ),
        }
    }
}

fn check_positive(args: &[(&str, f64)]) -> Result<()> {
    for (name, v) in args {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

/// `γ₀ = ½·min{1/(DG), α}`.
pub fn gamma_ons(diameter: f64, grad_bound: f64, alpha: f64) -> Result<f64> {
    check_positive(&[("diameter", diameter), ("grad_bound", grad_bound), ("alpha", alpha)])?;
    Ok(0.5 * (1.0 / (diameter * grad_bound)).min(alpha))
}

/// `γ = ½·min{2/((k+1)DG), α}` for the hysteresis core.
pub fn gamma_core(diameter: f64, grad_bound: f64, alpha: f64, k: f64) -> Result<f64> {
    check_positive(&[("diameter", diameter), ("grad_bound", grad_bound), ("alpha", alpha)])?;
    if !(k > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "hysteresis coefficient must exceed 1, got {k}"
        )));
    }
    Ok(0.5 * (2.0 / ((k + 1.0) * diameter * grad_bound)).min(alpha))
}

/// `γ' = ½·min{1/(c_f c_g DG), 4/(c_f c_g (k+1)DG), α}` for the proper
/// learner. For `k ≤ 3` and unit conversion constants this equals `γ₀`.
pub fn gamma_prime(
    diameter: f64,
    grad_bound: f64,
    alpha: f64,
    k: f64,
    c_f: f64,
    c_g: f64,
) -> Result<f64> {
    check_positive(&[("diameter", diameter), ("grad_bound", grad_bound), ("alpha", alpha)])?;
    if !(k > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "hysteresis coefficient must exceed 1, got {k}"
        )));
    }
    if c_f < 1.0 || c_g < 1.0 {
        return Err(Error::InvalidArgument(
            "conversion constants must be >= 1".into(),
        ));
    }
    let cc = c_f * c_g;
    let first = 1.0 / (cc * diameter * grad_bound);
    let second = 4.0 / (cc * (k + 1.0) * diameter * grad_bound);
    Ok(0.5 * first.min(second).min(alpha))
}

/// Per-round projection tolerance
/// `ζ_t = min{ γ/(2kD(c_g²G²t + ε)t²), (1/t)·√(γ/(2(c_g²G²t + ε)t)) }`.
///
/// Decays like `1/t²`, so the accumulated truncation error contributes only
/// an `O(1)` additive term (`Σ 1/t² ≤ π²/6`) to the regret. The ONS baseline
/// uses `hysteresis = 1` here: its iterates never leave the domain, so the
/// distance factor in the first branch is `2D` rather than `2kD`.
pub fn zeta_schedule(
    gamma: f64,
    hysteresis: f64,
    diameter: f64,
    c_g: f64,
    grad_bound: f64,
    epsilon: f64,
    t: usize,
) -> f64 {
    let tf = t as f64;
    let lam_hi = c_g * c_g * grad_bound * grad_bound * tf + epsilon;
    let first = gamma / (2.0 * hysteresis * diameter * lam_hi * tf * tf);
    let second = (1.0 / tf) * (gamma / (2.0 * lam_hi * tf)).sqrt();
    first.min(second)
}

/// Certified cap on the number of Mahalanobis projections over `horizon`
/// rounds: `⌊(2/((k−1)Dγ))·√(dT/ε)⌋`.
///
/// Only hysteresis variants have a nontrivial cap; for `k ≤ 1` (the ONS
/// baseline) this returns `horizon`, the trivial one-projection-per-round
/// bound.
pub fn projection_budget(config: &LearnerConfig, gamma: f64, horizon: usize) -> u64 {
    if horizon == 0 {
        return 0;
    }
    let k = config.hysteresis;
    if !(k > 1.0) || config.variant == Variant::Ons {
        return horizon as u64;
    }
    let t = horizon as f64;
    let d = config.dim as f64;
    let bound = (2.0 / ((k - 1.0) * config.diameter * gamma)) * (d * t / config.epsilon).sqrt();
    bound.floor().max(0.0) as u64
}

/// Regret upper bound `(d/(2γ))·log(1 + c_g²G²T/(dε)) + γεD²/8`.
pub fn regret_upper_bound(config: &LearnerConfig, gamma: f64, horizon: usize) -> f64 {
    let d = config.dim as f64;
    let t = horizon as f64;
    let cg2 = config.c_g * config.c_g;
    let g2 = config.grad_bound * config.grad_bound;
    (d / (2.0 * gamma)) * (1.0 + cg2 * g2 * t / (d * config.epsilon)).ln()
        + gamma * config.epsilon * config.diameter * config.diameter / 8.0
}

/// What kind of projection a round performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projected {
    /// The update was accepted as-is.
    None,
    /// A Mahalanobis projection fired (the expensive `O(d³)` event).
    Mahalanobis,
    /// Only the cheap Euclidean projection moved the emitted decision
    /// (proper variant with the core iterate outside the domain).
    EuclideanOnly,
}

impl Projected {
    pub fn as_str(&self) -> &'static str {
        match self {
            Projected::None => "none",
            Projected::Mahalanobis => "mahalanobis",
            Projected::EuclideanOnly => "euclidean_only",
        }
    }
}

/// Scalar per-round outcome. Cheap to return even with tracing off.
#[derive(Debug, Clone, Copy)]
pub struct Round {
    pub t: usize,
    pub loss: f64,
    pub y_norm: f64,
    pub grad_f_norm_sq: f64,
    pub projected: Projected,
    pub zeta: f64,
}

/// Full per-round record, collected only when tracing is enabled.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Array1<f64>,
    pub y_norm: f64,
    pub grad_f: Array1<f64>,
    pub grad_g: Array1<f64>,
    pub loss: f64,
    pub projected: Projected,
    pub zeta: f64,
}

/// Opt-in per-round log for regret and bound auditing.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<RoundRecord>,
}

impl Trace {
    /// Uniform average of the emitted decisions.
    pub fn average_decision(&self) -> Option<Array1<f64>> {
        let first = self.records.first()?;
        let mut acc = Array1::<f64>::zeros(first.x.len());
        for r in &self.records {
            acc += &r.x;
        }
        Some(acc / self.records.len() as f64)
    }
}

/// One online learner instance. Single-writer, value-like: safe to move
/// across threads, never shared mutably.
#[derive(Debug, Clone)]
pub struct LearnerState {
    config: LearnerConfig,
    gamma: f64,
    pd: PdPair,
    y: Array1<f64>,
    x: Array1<f64>,
    t: usize,
    mahalanobis_projections: u64,
    update_events: u64,
    grad_bound_violations: u64,
    warned_grad_bound: bool,
    trace: Option<Trace>,
}

impl LearnerState {
    pub fn new(config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        let gamma = config.gamma()?;
        let pd = PdPair::init(config.dim, config.epsilon)?
            .with_refresh_every(config.refresh_every);
        Ok(Self {
            y: Array1::zeros(config.dim),
            x: Array1::zeros(config.dim),
            gamma,
            pd,
            t: 0,
            mahalanobis_projections: 0,
            update_events: 0,
            grad_bound_violations: 0,
            warned_grad_bound: false,
            trace: None,
            config,
        })
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Trace::default());
    }

    pub fn trace(&self) -> Option<&Trace> {
        self.trace.as_ref()
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The emitted (proper) decision for the next round.
    pub fn decision(&self) -> &Array1<f64> {
        &self.x
    }

    /// The core iterate (`y`); equals the decision for ONS and Core.
    pub fn core_iterate(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn mahalanobis_projections(&self) -> u64 {
        self.mahalanobis_projections
    }

    /// Count of `O(d²)`-class events (rank-one update + inverse apply).
    pub fn update_events(&self) -> u64 {
        self.update_events
    }

    pub fn grad_bound_violations(&self) -> u64 {
        self.grad_bound_violations
    }

    pub fn preconditioner(&self) -> &PdPair {
        &self.pd
    }

    fn soft_check_grad(&mut self, grad: &ArrayView1<f64>) {
        let norm = grad.dot(grad).sqrt();
        if norm > self.config.grad_bound * (1.0 + 1e-9) {
            self.grad_bound_violations += 1;
            if !self.warned_grad_bound {
                self.warned_grad_bound = true;
                eprintln!(
                    "warning: gradient norm {norm} exceeds configured bound {}; \
                     projection eigenvalue certificates assume the bound and are \
                     no longer guaranteed",
                    self.config.grad_bound
                );
            }
        }
    }

    /// Mahalanobis projection of `point` onto the learner's domain under the
    /// current preconditioner.
    fn project_onto_domain(&mut self, point: &Array1<f64>, zeta: f64) -> Result<Array1<f64>> {
        let eig_hi = self.config.epsilon
            + self.config.c_g
                * self.config.c_g
                * self.config.grad_bound
                * self.config.grad_bound
                * self.t as f64;
        match &self.config.domain {
            ConvexDomain::Ball { radius } => {
                let req = ProjectionRequest {
                    metric: self.pd.matrix(),
                    point,
                    radius: *radius,
                    tolerance: zeta,
                    eig_lo: self.config.epsilon,
                    eig_hi,
                };
                fast_proj(&req, Backend::Tridiagonal)
            }
            // Baseline-only path: the hysteresis learners never project onto
            // a non-ball set.
            other => mahalanobis_project_iterative(
                &self.pd.matrix().view(),
                &point.view(),
                other,
                100_000,
                1e-12,
            ),
        }
    }

    /// Mahalanobis projection of `point` onto `B(D/2)` under the current
    /// preconditioner (proper-variant target).
    fn project_onto_half_diameter_ball(
        &mut self,
        point: &Array1<f64>,
        zeta: f64,
    ) -> Result<Array1<f64>> {
        let eig_hi = self.config.epsilon
            + self.config.c_g
                * self.config.c_g
                * self.config.grad_bound
                * self.config.grad_bound
                * self.t as f64;
        let req = ProjectionRequest {
            metric: self.pd.matrix(),
            point,
            radius: self.config.diameter / 2.0,
            tolerance: zeta,
            eig_lo: self.config.epsilon,
            eig_hi,
        };
        fast_proj(&req, Backend::Tridiagonal)
    }

    /// Feeds one round: the observed loss value and the gradient of the true
    /// loss at the current decision. Returns the scalar round outcome and
    /// advances the state.
    pub fn step(&mut self, loss: f64, grad_f: &ArrayView1<f64>) -> Result<Round> {
        if grad_f.len() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                got: grad_f.len(),
            });
        }
        self.soft_check_grad(grad_f);
        match self.config.variant {
            Variant::Ons | Variant::Core => self.step_improper(loss, grad_f),
            Variant::Full => self.step_proper(loss, grad_f),
        }
    }

    /// Shared body for ONS and Core: they differ only in the projection
    /// trigger (leaving the domain vs. leaving the expanded ball).
    fn step_improper(&mut self, loss: f64, grad: &ArrayView1<f64>) -> Result<Round> {
        self.t += 1;
        let grad_norm_sq = grad.dot(grad);
        let mut projected = Projected::None;
        let mut zeta = 0.0;

        if grad_norm_sq.sqrt() >= DEGENERATE_GRAD_TOL {
            self.pd.rank_one_update(grad)?;
            self.update_events += 1;
            let step_dir = self.pd.apply_inverse(grad);
            let x_hat = &self.x - &(step_dir / self.gamma);

            let accept = match self.config.variant {
                Variant::Ons => self.config.domain.contains(&x_hat.view(), 0.0),
                Variant::Core => {
                    x_hat.dot(&x_hat).sqrt()
                        <= self.config.hysteresis * self.config.diameter / 2.0
                }
                Variant::Full => unreachable!(),
            };
            if accept {
                self.x = x_hat;
            } else {
                zeta = zeta_schedule(
                    self.gamma,
                    if self.config.variant == Variant::Ons {
                        1.0
                    } else {
                        self.config.hysteresis
                    },
                    self.config.diameter,
                    self.config.c_g,
                    self.config.grad_bound,
                    self.config.epsilon,
                    self.t,
                );
                self.x = self.project_onto_domain(&x_hat, zeta)?;
                self.mahalanobis_projections += 1;
                projected = Projected::Mahalanobis;
            }
            self.y = self.x.clone();
        }

        let round = Round {
            t: self.t,
            loss,
            y_norm: self.y.dot(&self.y).sqrt(),
            grad_f_norm_sq: grad_norm_sq,
            projected,
            zeta,
        };
        if let Some(trace) = &mut self.trace {
            trace.records.push(RoundRecord {
                t: self.t,
                x: self.x.clone(),
                y_norm: round.y_norm,
                grad_f: grad.to_owned(),
                grad_g: grad.to_owned(),
                loss,
                projected,
                zeta,
            });
        }
        Ok(round)
    }

    fn step_proper(&mut self, loss: f64, grad_f: &ArrayView1<f64>) -> Result<Round> {
        self.t += 1;
        let grad_g = surrogate_gradient(grad_f, &self.x.view(), &self.y.view());
        let grad_g_norm = grad_g.dot(&grad_g).sqrt();
        let mut projected = Projected::None;
        let mut zeta = 0.0;

        if grad_g_norm >= DEGENERATE_GRAD_TOL {
            self.pd.rank_one_update(&grad_g.view())?;
            self.update_events += 1;
            let step_dir = self.pd.apply_inverse(&grad_g.view());
            let y_hat = &self.y - &(step_dir / self.gamma);

            if y_hat.dot(&y_hat).sqrt() <= self.config.hysteresis * self.config.diameter / 2.0 {
                self.y = y_hat;
            } else {
                zeta = zeta_schedule(
                    self.gamma,
                    self.config.hysteresis,
                    self.config.diameter,
                    self.config.c_g,
                    self.config.grad_bound,
                    self.config.epsilon,
                    self.t,
                );
                self.y = self.project_onto_half_diameter_ball(&y_hat, zeta)?;
                self.mahalanobis_projections += 1;
                projected = Projected::Mahalanobis;
            }
            self.x = euclidean_project(&self.config.domain, &self.y.view());
            if projected == Projected::None {
                let gap = (&self.y - &self.x).dot(&(&self.y - &self.x)).sqrt();
                if gap > 1e-12 {
                    projected = Projected::EuclideanOnly;
                }
            }
        }

        let round = Round {
            t: self.t,
            loss,
            y_norm: self.y.dot(&self.y).sqrt(),
            grad_f_norm_sq: grad_f.dot(grad_f),
            projected,
            zeta,
        };
        if let Some(trace) = &mut self.trace {
            trace.records.push(RoundRecord {
                t: self.t,
                x: self.x.clone(),
                y_norm: round.y_norm,
                grad_f: grad_f.to_owned(),
                grad_g,
                loss,
                projected,
                zeta,
            });
        }
        Ok(round)
    }
}
