//! Memory-efficient preconditioning via frequent-directions sketching.
//!
//! Instead of the full `d×d` pair maintained by [`crate::linalg::PdPair`],
//! the sketched learner keeps a `2d'×d` sketch `S` and the small inverse
//! `R = (εI + SSᵀ)⁻¹`. The implied preconditioner and its inverse are
//!
//! ```text
//! Ã = εI + SᵀS,      Ã⁻¹ = (1/ε)(I − SᵀRS),
//! ```
//!
//! the latter applied in `O(d'd)` without ever materializing a `d×d` matrix.
//! Gradients are inserted as rows until the sketch fills; then one truncated
//! SVD shrinks every retained direction's squared singular value by
//! `σ_{d'}²`, freeing half the rows and charging a sketch error
//! `Δ_t = (2d'/ε)·σ_{d'}²` that shows up additively in the regret.

use ndarray::{Array1, Array2, ArrayView1};

use crate::conversion::surrogate_gradient;
use crate::learners::{zeta_schedule, LearnerConfig, Projected, Round, RoundRecord, Trace, Variant};
use crate::linalg::{sym_eigen, DEGENERATE_GRAD_TOL};
use crate::projection::{euclidean_project, fast_proj, Backend, ProjectionRequest};
use crate::{Error, Result};

/// Frequent-directions sketch plus its low-dimensional inverse.
#[derive(Debug, Clone)]
pub struct SketchState {
    dim: usize,
    d_prime: usize,
    epsilon: f64,
    /// `2d'×d`; rows at index `>= next_zero_row` are exactly zero.
    s: Array2<f64>,
    /// `2d'×2d'`, maintained inverse of `εI + SSᵀ`.
    r: Array2<f64>,
    next_zero_row: usize,
    delta_accum: f64,
    /// Upper bound on `σ₁(S)²`: exact after each SVD, plus the squared norms
    /// of rows inserted since.
    sigma1_sq_bound: f64,
    svd_events: u64,
}

impl SketchState {
    pub fn new(dim: usize, d_prime: usize, epsilon: f64) -> Result<Self> {
        if d_prime == 0 || 2 * d_prime > dim {
            return Err(Error::InvalidArgument(format!(
                "sketch dimension must satisfy 1 <= d' <= d/2, got d'={d_prime}, d={dim}"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(Self {
            dim,
            d_prime,
            epsilon,
            s: Array2::zeros((2 * d_prime, dim)),
            r: Array2::eye(2 * d_prime) / epsilon,
            next_zero_row: 0,
            delta_accum: 0.0,
            sigma1_sq_bound: 0.0,
            svd_events: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn d_prime(&self) -> usize {
        self.d_prime
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sketch_matrix(&self) -> &Array2<f64> {
        &self.s
    }

    pub fn low_dim_inverse(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn next_zero_row(&self) -> usize {
        self.next_zero_row
    }

    /// Accumulated sketch error `Σ Δ_t`.
    pub fn delta_accum(&self) -> f64 {
        self.delta_accum
    }

    pub fn svd_events(&self) -> u64 {
        self.svd_events
    }

    /// Valid upper bound on the largest eigenvalue of `Ã` is
    /// `ε + sigma1_sq_bound()`.
    pub fn sigma1_sq_bound(&self) -> f64 {
        self.sigma1_sq_bound
    }

    /// Inserts a gradient as the first zero row and refreshes `R`; shrinks
    /// via truncated SVD when the sketch is full. `O(d'd)` between SVDs.
    pub fn fast_fd_update(&mut self, g: &ArrayView1<f64>) -> Result<()> {
        if g.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: g.len(),
            });
        }
        let rows = 2 * self.d_prime;
        let i = self.next_zero_row;
        debug_assert!(i < rows);

        // a = S_prev·g, computed before the row is written.
        let a = self.s.dot(g);
        let g_sq = g.dot(g);
        self.s.row_mut(i).assign(g);
        self.sigma1_sq_bound += g_sq;

        // R⁻¹ gains e_i aᵀ + b e_iᵀ with b = a + e_i·gᵀg; fold both into R
        // with two Sherman–Morrison corrections.
        let mut b = a.clone();
        b[i] += g_sq;
        self.smw_correct_col(i, &a); // + e_i aᵀ
        self.smw_correct_row(i, &b); // + b e_iᵀ

        self.next_zero_row += 1;
        if self.next_zero_row == rows {
            self.shrink()?;
        }
        Ok(())
    }

    /// `R ← (R⁻¹ + e_i vᵀ)⁻¹`.
    fn smw_correct_col(&mut self, i: usize, v: &Array1<f64>) {
        let r_ei = self.r.column(i).to_owned();
        let vt_r = v.dot(&self.r);
        let denom = 1.0 + vt_r[i];
        let rows = self.r.nrows();
        for p in 0..rows {
            for q in 0..rows {
                self.r[[p, q]] -= r_ei[p] * vt_r[q] / denom;
            }
        }
    }

    /// `R ← (R⁻¹ + v e_iᵀ)⁻¹`.
    fn smw_correct_row(&mut self, i: usize, v: &Array1<f64>) {
        let r_v = self.r.dot(v);
        let ei_r = self.r.row(i).to_owned();
        let denom = 1.0 + r_v[i];
        let rows = self.r.nrows();
        for p in 0..rows {
            for q in 0..rows {
                self.r[[p, q]] -= r_v[p] * ei_r[q] / denom;
            }
        }
    }

    /// Truncated-SVD shrink: keep the top `d'` directions with squared
    /// singular values reduced by `σ_{d'}²`, zero the rest, and rebuild `R`
    /// as the matching diagonal. Charges `Δ_t = (2d'/ε)·σ_{d'}²`.
    fn shrink(&mut self) -> Result<()> {
        let rows = 2 * self.d_prime;
        // Singular values of S from the small Gram matrix S·Sᵀ.
        let gram = self.s.dot(&self.s.t());
        let (evals, u) = sym_eigen(&gram.view())?;
        let sigma_sq: Vec<f64> = evals.iter().map(|&e| e.max(0.0)).collect();
        let shrink_by = sigma_sq[self.d_prime - 1];
        let cutoff = 1e-13 * sigma_sq[0].max(1e-300);

        let old_s = self.s.clone();
        self.s.fill(0.0);
        let mut kept = 0;
        for i in 0..self.d_prime {
            let shrunk_sq = sigma_sq[i] - shrink_by;
            if shrunk_sq <= cutoff || sigma_sq[i] <= cutoff {
                break; // singular values are sorted, the rest shrink to zero
            }
            // row = sqrt(shrunk²)·vᵢᵀ with vᵢ = Sᵀuᵢ/σᵢ
            let scale = (shrunk_sq / sigma_sq[i]).sqrt();
            let dir = u.column(i).dot(&old_s);
            let mut row = self.s.row_mut(kept);
            for j in 0..self.dim {
                row[j] = scale * dir[j];
            }
            kept += 1;
        }
        self.next_zero_row = kept;

        self.r.fill(0.0);
        for i in 0..rows {
            let shrunk_sq = if i < self.d_prime {
                (sigma_sq[i] - shrink_by).max(0.0)
            } else {
                0.0
            };
            self.r[[i, i]] = 1.0 / (self.epsilon + if i < kept { shrunk_sq } else { 0.0 });
        }

        let delta = 2.0 * self.d_prime as f64 / self.epsilon * shrink_by;
        self.delta_accum += delta;
        self.sigma1_sq_bound = (sigma_sq[0] - shrink_by).max(0.0);
        self.svd_events += 1;
        Ok(())
    }

    /// `Ã⁻¹·v = (1/ε)(v − Sᵀ(R(S·v)))` in `O(d'd)`.
    pub fn inverse_apply(&self, v: &ArrayView1<f64>) -> Array1<f64> {
        let sv = self.s.dot(v);
        let rsv = self.r.dot(&sv);
        let back = self.s.t().dot(&rsv);
        (v.to_owned() - back) / self.epsilon
    }

    /// Materializes `Ã = εI + SᵀS` as a dense `d×d` matrix. Only needed at
    /// projection events and in tests.
    pub fn reconstruct_dense(&self) -> Array2<f64> {
        let mut a = self.s.t().dot(&self.s);
        for i in 0..self.dim {
            a[[i, i]] += self.epsilon;
        }
        a
    }

    /// `‖R·(εI + SSᵀ) − I‖_F`, the maintained-inverse drift.
    pub fn inverse_drift(&self) -> f64 {
        let rows = 2 * self.d_prime;
        let mut m = self.s.dot(&self.s.t());
        for i in 0..rows {
            m[[i, i]] += self.epsilon;
        }
        let p = self.r.dot(&m);
        let mut err = 0.0;
        for i in 0..rows {
            for j in 0..rows {
                let e = p[[i, j]] - if i == j { 1.0 } else { 0.0 };
                err += e * e;
            }
        }
        err.sqrt()
    }
}

/// Spectral bound on the accumulated sketch error:
/// `min_{j ∈ [d']} (2d'/((d'−j+1)ε))·Σ_{i≥j} λ_i` over the (descending)
/// spectrum of the summed gradient outer products.
pub fn fd_error_bound(spectrum: &[f64], d_prime: usize, epsilon: f64) -> f64 {
    let d = spectrum.len();
    let mut best = f64::INFINITY;
    for j in 1..=d_prime.min(d) {
        let tail: f64 = spectrum[j - 1..].iter().sum();
        let val = 2.0 * d_prime as f64 / ((d_prime - j + 1) as f64 * epsilon) * tail;
        best = best.min(val);
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

/// The proper hysteresis learner backed by a sketch instead of the dense
/// pair. Identical control flow to the dense learner; the preconditioner is
/// applied through [`SketchState::inverse_apply`], and the dense `Ã` is
/// rebuilt only inside the (rare) Mahalanobis projection.
#[derive(Debug, Clone)]
pub struct SketchLearner {
    config: LearnerConfig,
    gamma: f64,
    sketch: SketchState,
    y: Array1<f64>,
    x: Array1<f64>,
    t: usize,
    mahalanobis_projections: u64,
    update_events: u64,
    dense_materializations: u64,
    trace: Option<Trace>,
}

impl SketchLearner {
    pub fn new(config: LearnerConfig, d_prime: usize) -> Result<Self> {
        if config.variant != Variant::Full {
            return Err(Error::InvalidArgument(
                "the sketched learner runs the proper (full) variant".into(),
            ));
        }
        config.validate()?;
        let gamma = config.gamma()?;
        let sketch = SketchState::new(config.dim, d_prime, config.epsilon)?;
        Ok(Self {
            y: Array1::zeros(config.dim),
            x: Array1::zeros(config.dim),
            gamma,
            sketch,
            t: 0,
            mahalanobis_projections: 0,
            update_events: 0,
            dense_materializations: 0,
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

    pub fn decision(&self) -> &Array1<f64> {
        &self.x
    }

    pub fn core_iterate(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn sketch(&self) -> &SketchState {
        &self.sketch
    }

    pub fn mahalanobis_projections(&self) -> u64 {
        self.mahalanobis_projections
    }

    pub fn update_events(&self) -> u64 {
        self.update_events
    }

    /// How many times a dense `d×d` matrix was materialized; equal to the
    /// Mahalanobis projection count by construction, which is what the
    /// memory-contract test pins down.
    pub fn dense_materializations(&self) -> u64 {
        self.dense_materializations
    }

    pub fn step(&mut self, loss: f64, grad_f: &ArrayView1<f64>) -> Result<Round> {
        if grad_f.len() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                got: grad_f.len(),
            });
        }
        self.t += 1;
        let grad_g = surrogate_gradient(grad_f, &self.x.view(), &self.y.view());
        let grad_g_norm = grad_g.dot(&grad_g).sqrt();
        let mut projected = Projected::None;
        let mut zeta = 0.0;

        if grad_g_norm >= DEGENERATE_GRAD_TOL {
            self.sketch.fast_fd_update(&grad_g.view())?;
            self.update_events += 1;
            let step_dir = self.sketch.inverse_apply(&grad_g.view());
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
                let dense = self.sketch.reconstruct_dense();
                self.dense_materializations += 1;
                let req = ProjectionRequest {
                    metric: &dense,
                    point: &y_hat,
                    radius: self.config.diameter / 2.0,
                    tolerance: zeta,
                    eig_lo: self.config.epsilon,
                    eig_hi: self.config.epsilon + self.sketch.sigma1_sq_bound(),
                };
                self.y = fast_proj(&req, Backend::Tridiagonal)?;
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
