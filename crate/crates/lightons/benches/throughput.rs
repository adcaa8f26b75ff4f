//! Throughput comparison: rayon-parallel vs sequential execution of an
//! experiment batch, plus the two Mahalanobis-projection backends.
//!
//! Run with `cargo bench`. Disabling the default `parallel` feature makes
//! the "parallel" case fall back to the sequential path, which is a quick
//! way to sanity-check the dispatch overhead itself.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array1, Array2};

use lightons::exec::ExecMode;
use lightons::harness::{run_experiment, Algorithm, ExperimentConfig};
use lightons::projection::{fast_proj, Backend, ProjectionRequest};
use lightons::tasks::Task;

fn batch_config(mode: ExecMode) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(Algorithm::Lightons, Task::Logistic, 10, 2_000);
    config.runs = 8;
    config.seed = 11;
    config.exec_mode = mode;
    config
}

fn bench_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("experiment_batch_8x2000");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        let config = batch_config(ExecMode::Parallel);
        b.iter(|| black_box(run_experiment(&config).unwrap()));
    });
    group.bench_function("sequential", |b| {
        let config = batch_config(ExecMode::Sequential);
        b.iter(|| black_box(run_experiment(&config).unwrap()));
    });
    group.finish();
}

fn projection_instance(d: usize) -> (Array2<f64>, Array1<f64>) {
    // deterministic moderately conditioned SPD matrix and an exterior point
    let mut b = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            b[[i, j]] = ((i * 31 + j * 17 + 7) % 13) as f64 / 13.0 - 0.5;
        }
    }
    let mut a = b.t().dot(&b);
    for i in 0..d {
        a[[i, i]] += 1.0 + i as f64 / d as f64;
    }
    let mut u = Array1::<f64>::zeros(d);
    for i in 0..d {
        u[i] = 1.0 + ((i * 7) % 5) as f64;
    }
    let norm = u.dot(&u).sqrt();
    u *= 3.0 / norm;
    (a, u)
}

fn bench_fast_proj(c: &mut Criterion) {
    let d = 40;
    let (a, u) = projection_instance(d);
    let req = ProjectionRequest {
        metric: &a,
        point: &u,
        radius: 1.0,
        tolerance: 1e-8,
        eig_lo: 0.5,
        eig_hi: 60.0,
    };
    let mut group = c.benchmark_group("mahalanobis_projection_d40");
    group.bench_function("dense_solve_backend", |b| {
        b.iter(|| black_box(fast_proj(&req, Backend::DenseSolve).unwrap()));
    });
    group.bench_function("tridiagonal_backend", |b| {
        b.iter(|| black_box(fast_proj(&req, Backend::Tridiagonal).unwrap()));
    });
    group.finish();
}

criterion_group!(benches, bench_batch, bench_fast_proj);
criterion_main!(benches);
