//! Cross-module invariants that tie the learners to the loss oracles: the
//! exp-concavity curvature inequality, the surrogate-loss curvature chain,
//! gradient-norm-adaptive regret on a decaying stream, and numerical
//! equivalences between the two projection formulations.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lightons::conversion::surrogate_gradient;
use lightons::harness::{GRAD_BOUND, REGRET_SLACK};
use lightons::learners::{
    gamma_ons, gamma_prime, regret_upper_bound, LearnerConfig, LearnerState, Variant,
};
use lightons::linalg::{dense_solve, tridiag_shifted_solve, tridiagonalize, PdPair};
use lightons::projection::{euclidean_project, ConvexDomain};
use lightons::tasks::{
    loss_and_grad, offline_best_comparator, sample_stream, task_alpha, StreamConfig, Task,
};

fn random_vec(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn random_in_ball(dim: usize, radius: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let mut v = random_vec(dim, rng);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    let n = v.dot(&v).sqrt().max(1e-12);
    v *= r / n;
    v
}

/// `f(x) − f(u) ≤ ∇f(x)ᵀ(x−u) − (γ₀/2)(∇f(x)ᵀ(x−u))²` on random pairs, for
/// both shipped losses at their calibrated curvature parameters.
#[test]
fn exp_concave_curvature_inequality() {
    let domain = ConvexDomain::ball(0.5);
    let diameter = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    for task in [Task::Linear, Task::Logistic] {
        let alpha = task_alpha(task, &domain, GRAD_BOUND).unwrap();
        let gamma0 = gamma_ons(diameter, GRAD_BOUND, alpha).unwrap();
        let cfg = StreamConfig::new(task, 10, 500, 19);
        let stream = sample_stream(&cfg, 0);
        for _ in 0..10_000 {
            let s = &stream.samples[(rng.random::<u32>() as usize) % stream.samples.len()];
            let x = random_in_ball(10, 0.5, &mut rng);
            let u = random_in_ball(10, 0.5, &mut rng);
            let (fx, gx) = loss_and_grad(task, &x.view(), s);
            let (fu, _) = loss_and_grad(task, &u.view(), s);
            let lin = gx.dot(&(&x - &u));
            assert!(
                fx - fu <= lin - 0.5 * gamma0 * lin * lin + 1e-12,
                "{task:?}: curvature inequality violated"
            );
        }
    }
}

/// The per-round chain through the surrogate:
/// `f(x) − f(u) ≤ ∇gᵀ(y−u) − (γ'/2)(∇gᵀ(y−u))²` with `x = Π_𝒳[y]`.
#[test]
fn surrogate_curvature_chain() {
    let domain = ConvexDomain::ball(0.5);
    let diameter = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    for task in [Task::Linear, Task::Logistic] {
        let alpha = task_alpha(task, &domain, GRAD_BOUND).unwrap();
        let cfg = StreamConfig::new(task, 10, 500, 23);
        let stream = sample_stream(&cfg, 0);
        for k in [2.0, 3.0] {
            let gamma = gamma_prime(diameter, GRAD_BOUND, alpha, k, 1.0, 1.0).unwrap();
            for _ in 0..2_000 {
                let s = &stream.samples[(rng.random::<u32>() as usize) % stream.samples.len()];
                // core iterate anywhere in the expanded ball B(kD/2)
                let y = random_in_ball(10, k * diameter / 2.0, &mut rng);
                let x = euclidean_project(&domain, &y.view());
                let (fx, grad_f) = loss_and_grad(task, &x.view(), s);
                let grad_g = surrogate_gradient(&grad_f.view(), &x.view(), &y.view());
                for _ in 0..20 {
                    let u = random_in_ball(10, 0.5, &mut rng);
                    let (fu, _) = loss_and_grad(task, &u.view(), s);
                    let lin = grad_g.dot(&(&y - &u));
                    assert!(
                        fx - fu <= lin - 0.5 * gamma * lin * lin + 1e-12,
                        "{task:?} k={k}: surrogate curvature chain violated"
                    );
                }
            }
        }
    }
}

/// On a stream whose gradients decay like `1/t`, the regret is governed by
/// the accumulated squared gradient norms `G_T`, not the horizon.
#[test]
fn gradient_norm_adaptive_regret() {
    let dim = 10;
    let horizon = 10_000;
    let domain = ConvexDomain::ball(0.5);
    let alpha = 5.0;
    let epsilon = dim as f64 * (horizon as f64).ln();

    // scale sample t by 1/√t: the induced gradient norm decays like 1/t
    let cfg = StreamConfig::new(Task::Linear, dim, horizon, 37);
    let mut stream = sample_stream(&cfg, 0);
    for (t, s) in stream.samples.iter_mut().enumerate() {
        let c = 1.0 / ((t + 1) as f64).sqrt();
        s.features *= c;
        if let Some(y) = s.target.as_mut() {
            *y *= c;
        }
    }

    let config = LearnerConfig::new(
        Variant::Full,
        dim,
        domain.clone(),
        GRAD_BOUND,
        alpha,
        epsilon,
    );
    let gamma = config.gamma().unwrap();
    let mut learner = LearnerState::new(config.clone()).unwrap();
    let mut losses = Vec::with_capacity(horizon);
    let mut grad_norm_sq_sum = 0.0;
    for s in &stream.samples {
        let (loss, grad) = loss_and_grad(Task::Linear, &learner.decision().view(), s);
        let round = learner.step(loss, &grad.view()).unwrap();
        grad_norm_sq_sum += round.grad_f_norm_sq;
        losses.push(loss);
    }
    let comparator =
        offline_best_comparator(&stream.samples, Task::Linear, &domain, 200_000, 1e-10);
    let comp_total: f64 = stream
        .samples
        .iter()
        .map(|s| loss_and_grad(Task::Linear, &comparator.minimizer.view(), s).0)
        .sum();
    let regret = losses.iter().sum::<f64>() - comp_total;

    assert!(
        grad_norm_sq_sum < 0.05 * GRAD_BOUND * GRAD_BOUND * horizon as f64,
        "stream is not gradient-decaying: G_T = {grad_norm_sq_sum}"
    );
    let df = dim as f64;
    let adaptive_bound = df / (2.0 * gamma) * (1.0 + grad_norm_sq_sum / (df * epsilon)).ln()
        + gamma * epsilon / 8.0;
    assert!(
        regret <= adaptive_bound + REGRET_SLACK,
        "regret {regret} exceeds gradient-norm-adaptive bound {adaptive_bound}"
    );
    // and the adaptive bound is far below the worst-case horizon bound
    let worst_case = regret_upper_bound(&config, gamma, horizon);
    assert!(adaptive_bound < worst_case);
}

/// The tridiagonal formulation solves the same system as the dense one after
/// the change of basis: `‖Q·z − x_dense‖ ≤ 1e-8`.
#[test]
fn tridiagonal_change_of_basis_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(93);
    for _ in 0..30 {
        let d = 3 + (rng.random::<u32>() as usize) % 10;
        let mut b = Array2::<f64>::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                b[[i, j]] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut a = b.t().dot(&b);
        for i in 0..d {
            a[[i, i]] += 0.5;
        }
        let u = random_vec(d, &mut rng);
        let mu = rng.random::<f64>() * 3.0;

        let tri = tridiagonalize(&a.view()).unwrap();
        let q_rhs = tri.tridiag_mul(&tri.q.t().dot(&u).view());
        let z = tridiag_shifted_solve(&tri.diag, &tri.off, mu, &q_rhs.view()).unwrap();
        let back = tri.q.dot(&z);

        let mut shifted = a.clone();
        for i in 0..d {
            shifted[[i, i]] += mu;
        }
        let rhs = a.dot(&u);
        let x_dense = dense_solve(&shifted.view(), &rhs.view()).unwrap();
        let gap = (&back - &x_dense).dot(&(&back - &x_dense)).sqrt();
        assert!(gap <= 1e-8, "change-of-basis gap {gap} at d={d}");
    }
}

/// Long-horizon Sherman–Morrison drift: 10⁴ unit-bounded updates at `d = 20`
/// keep `‖V·A − I‖_F` below 1e-6.
#[test]
fn long_horizon_inverse_drift() {
    let mut rng = ChaCha8Rng::seed_from_u64(94);
    let d = 20;
    let mut pd = PdPair::init(d, 1.0).unwrap();
    for _ in 0..10_000 {
        let mut g = random_vec(d, &mut rng);
        let n = g.dot(&g).sqrt();
        g *= rng.random::<f64>() / n.max(1e-12);
        pd.rank_one_update(&g.view()).unwrap();
    }
    let drift = pd.inverse_drift();
    assert!(drift <= 1e-6, "drift {drift}");
}
