//! Loss oracles and seeded data streams for the experiment harness.
//!
//! Two regression tasks over folded-Gaussian data:
//!
//! ```text
//! linear:    ℓ(w) = ½(xᵀw + y)²          logistic: ℓ(w) = log(1 + exp(xᵀw))
//! ```
//!
//! Logistic samples carry no target. Samples are scaled by a per-task
//! `feature_scale`, and any sample whose worst-case gradient over the domain
//! would still exceed the configured bound `G` is rescaled down to meet it
//! exactly; the clip rate is reported alongside the stream. The default
//! scales are calibrated so the clip rate stays below 0.1% at the flagship
//! configuration (`d = 10`, ball of radius 1/2, `G = 1/10`).
//!
//! Randomness: one ChaCha8 generator per run, seeded with the base seed and
//! switched to sub-stream `1 + run_index`; held-out evaluation data uses
//! sub-stream `2³² + run_index`. Identical configs therefore reproduce
//! bit-identical streams, across platforms and regardless of how runs are
//! scheduled.

use ndarray::{Array1, Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::learners::Trace;
use crate::projection::{euclidean_project, ConvexDomain};
use crate::{Error, Result};

/// Which loss family a stream draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Linear,
    Logistic,
}

/// Default feature scale per task; see the module docs for the calibration
/// target.
pub fn default_feature_scale(task: Task) -> f64 {
    match task {
        Task::Linear => 0.05,
        Task::Logistic => 0.034,
    }
}

/// Stream parameters. `grad_bound` and `domain_radius` feed the clip rule,
/// which needs the worst-case gradient over the decision domain.
#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub task: Task,
    pub dim: usize,
    pub horizon: usize,
    pub seed: u64,
    pub feature_scale: f64,
    pub runs: usize,
    pub grad_bound: f64,
    pub domain_radius: f64,
}

impl StreamConfig {
    pub fn new(task: Task, dim: usize, horizon: usize, seed: u64) -> Self {
        Self {
            task,
            dim,
            horizon,
            seed,
            feature_scale: default_feature_scale(task),
            runs: 5,
            grad_bound: 0.1,
            domain_radius: 0.5,
        }
    }
}

/// One observed round: scaled features, optional target (linear only), and
/// whether the clip rule fired on this sample.
#[derive(Debug, Clone)]
pub struct LossSample {
    pub features: Array1<f64>,
    pub target: Option<f64>,
    pub clipped: bool,
}

/// A generated stream with its clip statistics.
#[derive(Debug, Clone)]
pub struct GeneratedStream {
    pub samples: Vec<LossSample>,
    pub clip_count: usize,
}

impl GeneratedStream {
    pub fn clip_rate(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.clip_count as f64 / self.samples.len() as f64
        }
    }
}

fn folded(rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z.abs()
}

/// Worst-case gradient norm of one sample over the ball of radius
/// `domain_radius`.
fn worst_case_grad(task: Task, features: &Array1<f64>, target: f64, domain_radius: f64) -> f64 {
    let norm = features.dot(features).sqrt();
    match task {
        // sup over ‖w‖ ≤ r of |xᵀw + y|·‖x‖ = (r‖x‖ + |y|)·‖x‖
        Task::Linear => (domain_radius * norm + target.abs()) * norm,
        // sup of σ(xᵀw)·‖x‖ = σ(r‖x‖)·‖x‖
        Task::Logistic => sigmoid(domain_radius * norm) * norm,
    }
}

fn draw_sample(task: Task, cfg: &StreamConfig, rng: &mut ChaCha8Rng) -> LossSample {
    let mut features = Array1::<f64>::zeros(cfg.dim);
    for f in features.iter_mut() {
        *f = folded(rng) * cfg.feature_scale;
    }
    let mut target = match task {
        Task::Linear => folded(rng) * cfg.feature_scale,
        Task::Logistic => 0.0,
    };

    let wc = worst_case_grad(task, &features, target, cfg.domain_radius);
    let mut clipped = false;
    if wc > cfg.grad_bound {
        clipped = true;
        let c = match task {
            // gradient scales quadratically in the sample for the linear loss
            Task::Linear => (cfg.grad_bound / wc).sqrt(),
            // σ is increasing, so shrinking by the ratio is conservative
            Task::Logistic => cfg.grad_bound / wc,
        };
        features *= c;
        target *= c;
    }
    LossSample {
        features,
        target: match task {
            Task::Linear => Some(target),
            Task::Logistic => None,
        },
        clipped,
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic per-run stream: sub-stream `1 + run_index` of the base seed.
pub fn sample_stream(config: &StreamConfig, run_index: u64) -> GeneratedStream {
    let mut rng = stream_rng(config.seed, 1 + run_index);
    let samples: Vec<LossSample> = (0..config.horizon)
        .map(|_| draw_sample(config.task, config, &mut rng))
        .collect();
    let clip_count = samples.iter().filter(|s| s.clipped).count();
    GeneratedStream { samples, clip_count }
}

/// Fresh evaluation data on a sub-stream disjoint from every training run.
pub fn heldout_stream(config: &StreamConfig, run_index: u64, size: usize) -> GeneratedStream {
    let mut rng = stream_rng(config.seed, (1u64 << 32) + run_index);
    let samples: Vec<LossSample> = (0..size)
        .map(|_| draw_sample(config.task, config, &mut rng))
        .collect();
    let clip_count = samples.iter().filter(|s| s.clipped).count();
    GeneratedStream { samples, clip_count }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `½(xᵀw + y)²` and its gradient `(xᵀw + y)·x`.
pub fn linear_loss(w: &ArrayView1<f64>, sample: &LossSample) -> (f64, Array1<f64>) {
    let y = sample.target.unwrap_or(0.0);
    let r = sample.features.dot(w) + y;
    (0.5 * r * r, &sample.features * r)
}

/// `log(1 + exp(xᵀw))` and its gradient `σ(xᵀw)·x`, overflow-safe on both
/// tails.
pub fn logistic_loss(w: &ArrayView1<f64>, sample: &LossSample) -> (f64, Array1<f64>) {
    let z = sample.features.dot(w);
    let loss = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    (loss, &sample.features * sigmoid(z))
}

/// Dispatches on the task.
pub fn loss_and_grad(task: Task, w: &ArrayView1<f64>, sample: &LossSample) -> (f64, Array1<f64>) {
    match task {
        Task::Linear => linear_loss(w, sample),
        Task::Logistic => logistic_loss(w, sample),
    }
}

/// Exp-concavity parameter for the calibrated configurations: 5 for linear
/// and `e^{−1/5}` for logistic, valid for `G = 1/10` on any ball of radius
/// at most 1 (exp-concavity restricts to subsets). Other configurations must
/// supply `α` explicitly.
pub fn task_alpha(task: Task, domain: &ConvexDomain, grad_bound: f64) -> Result<f64> {
    let calibrated = matches!(domain, ConvexDomain::Ball { radius } if *radius <= 1.0 + 1e-12)
        && (grad_bound - 0.1).abs() <= 1e-12;
    if !calibrated {
        return Err(Error::InvalidArgument(
            "no calibrated exp-concavity parameter for this configuration; supply alpha explicitly"
                .into(),
        ));
    }
    Ok(match task {
        Task::Linear => 5.0,
        Task::Logistic => (-0.2f64).exp(),
    })
}

/// Result of projected gradient descent on the recorded losses.
#[derive(Debug, Clone)]
pub struct ComparatorResult {
    pub minimizer: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Hindsight comparator: minimizes the average recorded loss over the domain
/// by projected gradient descent, run until the gradient-mapping norm drops
/// below `tol` or the iteration cap is hit. Independent of every online
/// learner.
pub fn offline_best_comparator(
    samples: &[LossSample],
    task: Task,
    domain: &ConvexDomain,
    max_iters: usize,
    tol: f64,
) -> ComparatorResult {
    let Some(first) = samples.first() else {
        return ComparatorResult {
            minimizer: Array1::zeros(0),
            converged: true,
            iterations: 0,
        };
    };
    let d = first.features.len();
    let n = samples.len() as f64;

    // Gram statistics: exact gradient for the linear task, and a Lipschitz
    // bound for both (the logistic Hessian is at most Gram/4).
    let mut gram = Array2::<f64>::zeros((d, d));
    let mut cross = Array1::<f64>::zeros(d);
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                gram[[i, j]] += s.features[i] * s.features[j] / n;
            }
            cross[i] += s.features[i] * s.target.unwrap_or(0.0) / n;
        }
    }
    let mut lam_hi = 0.0f64;
    for i in 0..d {
        let row: f64 = (0..d).map(|j| gram[[i, j]].abs()).sum();
        lam_hi = lam_hi.max(row);
    }
    let lipschitz = match task {
        Task::Linear => lam_hi,
        Task::Logistic => lam_hi / 4.0,
    }
    .max(1e-300);
    let step = 1.0 / lipschitz;

    let grad_at = |w: &Array1<f64>| -> Array1<f64> {
        match task {
            Task::Linear => gram.dot(w) + &cross,
            Task::Logistic => {
                let mut g = Array1::<f64>::zeros(d);
                for s in samples {
                    let z = s.features.dot(w);
                    g += &(&s.features * (sigmoid(z) / n));
                }
                g
            }
        }
    };

    let mut w = euclidean_project(domain, &Array1::<f64>::zeros(d).view());
    for iter in 0..max_iters {
        let g = grad_at(&w);
        let next = euclidean_project(domain, &(&w - &(&g * step)).view());
        let gm = (&w - &next).dot(&(&w - &next)).sqrt() / step;
        w = next;
        if gm <= tol {
            return ComparatorResult {
                minimizer: w,
                converged: true,
                iterations: iter + 1,
            };
        }
    }
    eprintln!("warning: comparator did not reach tolerance {tol} within {max_iters} iterations");
    ComparatorResult {
        minimizer: w,
        converged: false,
        iterations: max_iters,
    }
}

/// Average loss of `w` over a sample set.
pub fn mean_loss(task: Task, w: &ArrayView1<f64>, samples: &[LossSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|s| loss_and_grad(task, w, s).0)
        .sum::<f64>()
        / samples.len() as f64
}

/// Aggregated stochastic solution and its held-out excess risk.
#[derive(Debug, Clone)]
pub struct SxoResult {
    pub average_iterate: Array1<f64>,
    pub excess_risk: f64,
    pub horizon: usize,
    pub delta: f64,
}

/// Online-to-batch conversion: average the online decisions and estimate the
/// excess risk on fresh held-out data, against the held-out objective's own
/// minimizer.
pub fn online_to_batch(
    trace: &Trace,
    heldout: &[LossSample],
    task: Task,
    domain: &ConvexDomain,
    delta: f64,
) -> Result<SxoResult> {
    let average_iterate = trace
        .average_decision()
        .ok_or_else(|| Error::InvalidArgument("online-to-batch needs a non-empty trace".into()))?;
    let comparator = offline_best_comparator(heldout, task, domain, 100_000, 1e-10);
    let risk_avg = mean_loss(task, &average_iterate.view(), heldout);
    let risk_best = mean_loss(task, &comparator.minimizer.view(), heldout);
    Ok(SxoResult {
        average_iterate,
        excess_risk: risk_avg - risk_best,
        horizon: trace.records.len(),
        delta,
    })
}

/// High-probability excess-risk bound evaluated from a run's own regret:
/// `(Reg + 4√(Reg·log(4·log T/δ)/(2γ₀)) + (8/γ₀)·log(4·log T/δ)) / T`.
pub fn excess_risk_bound(regret: f64, gamma0: f64, horizon: usize, delta: f64) -> f64 {
    let t = horizon as f64;
    let log_term = (4.0 * t.ln() / delta).ln();
    let reg = regret.max(0.0);
    (reg + 4.0 * (reg * log_term / (2.0 * gamma0)).sqrt() + 8.0 / gamma0 * log_term) / t
}
