//! Experiment harness: configuration, algorithm dispatch, regret accounting,
//! bound audits, and CSV emission.
//!
//! Every run is deterministic given `(seed, run_index)`; runs execute
//! independently (in parallel with the `parallel` feature) and results are
//! collected in run order, so repeated invocations of the same configuration
//! produce byte-identical output files. Runtime is reported as counts of
//! `O(d²)`-class events (rank-one update + inverse apply, one per round) and
//! `O(d³)`-class events (Mahalanobis projections) rather than wall-clock
//! time, which keeps the audit meaningful across machines and the output
//! reproducible.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::Serialize;

use crate::exec::{map_indexed, ExecMode};
use crate::learners::{
    projection_budget, regret_upper_bound, LearnerConfig, LearnerState, Variant,
};
use crate::projection::ConvexDomain;
use crate::sketch::SketchLearner;
use crate::tasks::{
    default_feature_scale, loss_and_grad, offline_best_comparator, sample_stream, task_alpha,
    StreamConfig, Task,
};
use crate::{Error, Result};

/// Gradient-norm bound of the calibrated experiment configurations.
pub const GRAD_BOUND: f64 = 0.1;

/// Additive slack allowed on the regret bound, covering the accumulated
/// projection truncation error (`Σ 1/t² ≤ π²/6`) plus comparator tolerance.
pub const REGRET_SLACK: f64 = 2.0;

/// Which learner the harness drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ons,
    Lightons,
    LightonsCore,
    LightonsSketch,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Ons => "ons",
            Algorithm::Lightons => "lightons",
            Algorithm::LightonsCore => "lightons-core",
            Algorithm::LightonsSketch => "lightons-sketch",
        }
    }
}

/// Preconditioner coefficient: explicit, or `d·log T` when the horizon is
/// known (the horizon is always known here; very short horizons fall back to
/// `d·log 2` to keep the coefficient positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonChoice {
    Auto,
    Fixed(f64),
}

impl EpsilonChoice {
    pub fn resolve(&self, dim: usize, horizon: usize) -> f64 {
        match self {
            EpsilonChoice::Fixed(v) => *v,
            EpsilonChoice::Auto => dim as f64 * (horizon.max(2) as f64).ln(),
        }
    }
}

/// Full experiment specification.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub task: Task,
    pub dim: usize,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub epsilon: EpsilonChoice,
    pub hysteresis: f64,
    pub d_prime: Option<usize>,
    pub domain_radius: f64,
    pub out_dir: Option<PathBuf>,
    pub emit_per_round: bool,
    pub exec_mode: ExecMode,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, task: Task, dim: usize, horizon: usize) -> Self {
        Self {
            algorithm,
            task,
            dim,
            horizon,
            runs: 5,
            seed: 0,
            epsilon: EpsilonChoice::Auto,
            hysteresis: 2.0,
            d_prime: None,
            domain_radius: 0.5,
            out_dir: None,
            emit_per_round: false,
            exec_mode: ExecMode::Parallel,
        }
    }

    /// Collects every configuration problem instead of stopping at the
    /// first, so a bad invocation is fixable in one pass.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errors = Vec::new();
        if self.dim == 0 {
            errors.push("d must be >= 1".into());
        }
        if self.runs == 0 {
            errors.push("runs must be >= 1".into());
        }
        if !(self.domain_radius > 0.0) {
            errors.push(format!("radius must be positive, got {}", self.domain_radius));
        }
        if self.domain_radius > 1.0 + 1e-12 {
            errors.push(format!(
                "radius {} exceeds 1, outside the calibrated exp-concavity range",
                self.domain_radius
            ));
        }
        if let EpsilonChoice::Fixed(v) = self.epsilon {
            if !(v > 0.0) || !v.is_finite() {
                errors.push(format!("epsilon must be positive and finite, got {v}"));
            }
        }
        if self.algorithm != Algorithm::Ons && !(self.hysteresis > 1.0) {
            errors.push(format!(
                "k must exceed 1 for hysteresis algorithms, got {}",
                self.hysteresis
            ));
        }
        match (self.algorithm, self.d_prime) {
            (Algorithm::LightonsSketch, None) => {
                errors.push("lightons-sketch requires --d-prime".into())
            }
            (Algorithm::LightonsSketch, Some(dp)) if dp == 0 || 2 * dp > self.dim => {
                errors.push(format!(
                    "d-prime must satisfy 1 <= d' <= d/2, got d'={dp}, d={}",
                    self.dim
                ));
            }
            _ => {}
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    fn domain(&self) -> ConvexDomain {
        ConvexDomain::ball(self.domain_radius)
    }

    fn learner_config(&self) -> Result<LearnerConfig> {
        let domain = self.domain();
        let alpha = task_alpha(self.task, &domain, GRAD_BOUND)?;
        let epsilon = self.epsilon.resolve(self.dim, self.horizon);
        let variant = match self.algorithm {
            Algorithm::Ons => Variant::Ons,
            Algorithm::LightonsCore => Variant::Core,
            Algorithm::Lightons | Algorithm::LightonsSketch => Variant::Full,
        };
        Ok(
            LearnerConfig::new(variant, self.dim, domain, GRAD_BOUND, alpha, epsilon)
                .with_hysteresis(self.hysteresis),
        )
    }

    fn stream_config(&self) -> StreamConfig {
        let mut cfg = StreamConfig::new(self.task, self.dim, self.horizon, self.seed);
        cfg.runs = self.runs;
        cfg.grad_bound = GRAD_BOUND;
        cfg.domain_radius = self.domain_radius;
        cfg
    }
}

/// Per-run summary row; the CSV columns mirror these fields in order.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub final_regret: f64,
    pub regret_bound: f64,
    pub mahalanobis_projections: u64,
    pub projection_budget: u64,
    pub grad_norm_sq_sum: f64,
    pub max_y_norm: f64,
    pub update_events_d2: u64,
    pub projection_events_d3: u64,
    pub clip_rate: f64,
    pub seed: u64,
}

/// Per-round CSV row, emitted only with `emit_per_round`.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: usize,
    pub regret: f64,
    pub instantaneous_regret: f64,
    pub y_norm: f64,
    pub projected: &'static str,
    pub zeta: f64,
}

/// Everything a single run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Vec<TraceRow>,
    pub average_decision: Array1<f64>,
    pub audit_failures: Vec<String>,
}

/// All runs of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutput>,
    pub resolved_epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl ExperimentOutcome {
    pub fn audit_failures(&self) -> Vec<String> {
        self.runs
            .iter()
            .flat_map(|r| r.audit_failures.iter().cloned())
            .collect()
    }
}

enum Driver {
    Dense(Box<LearnerState>),
    Sketch(Box<SketchLearner>),
}

impl Driver {
    fn decision(&self) -> &Array1<f64> {
        match self {
            Driver::Dense(l) => l.decision(),
            Driver::Sketch(l) => l.decision(),
        }
    }

    fn step(&mut self, loss: f64, grad: &ndarray::ArrayView1<f64>) -> Result<crate::learners::Round> {
        match self {
            Driver::Dense(l) => l.step(loss, grad),
            Driver::Sketch(l) => l.step(loss, grad),
        }
    }

    fn mahalanobis_projections(&self) -> u64 {
        match self {
            Driver::Dense(l) => l.mahalanobis_projections(),
            Driver::Sketch(l) => l.mahalanobis_projections(),
        }
    }

    fn update_events(&self) -> u64 {
        match self {
            Driver::Dense(l) => l.update_events(),
            Driver::Sketch(l) => l.update_events(),
        }
    }
}

fn run_single(config: &ExperimentConfig, run_index: usize) -> Result<RunOutput> {
    let learner_config = config.learner_config()?;
    let gamma = learner_config.gamma()?;
    let mut driver = match config.algorithm {
        Algorithm::LightonsSketch => {
            let dp = config.d_prime.ok_or_else(|| {
                Error::InvalidArgument("lightons-sketch requires d_prime".into())
            })?;
            Driver::Sketch(Box::new(SketchLearner::new(learner_config.clone(), dp)?))
        }
        _ => Driver::Dense(Box::new(LearnerState::new(learner_config.clone())?)),
    };

    let stream = sample_stream(&config.stream_config(), run_index as u64);
    let mut learner_losses = Vec::with_capacity(config.horizon);
    let mut rounds = Vec::with_capacity(config.horizon);
    let mut avg_decision = Array1::<f64>::zeros(config.dim);
    let mut grad_norm_sq_sum = 0.0;
    let mut max_y_norm = 0.0f64;

    for sample in &stream.samples {
        let decision = driver.decision().clone();
        let (loss, grad) = loss_and_grad(config.task, &decision.view(), sample);
        avg_decision += &decision;
        let round = driver.step(loss, &grad.view())?;
        grad_norm_sq_sum += round.grad_f_norm_sq;
        max_y_norm = max_y_norm.max(round.y_norm);
        learner_losses.push(loss);
        rounds.push((round.y_norm, round.projected, round.zeta));
    }
    if !stream.samples.is_empty() {
        avg_decision /= stream.samples.len() as f64;
    }

    // End-of-horizon comparator; regret is measured against this fixed point.
    let domain = config.domain();
    let comparator = offline_best_comparator(&stream.samples, config.task, &domain, 100_000, 1e-8);

    let mut trace = Vec::with_capacity(stream.samples.len());
    let mut cumulative = 0.0;
    for (t, sample) in stream.samples.iter().enumerate() {
        let (comp_loss, _) = loss_and_grad(config.task, &comparator.minimizer.view(), sample);
        let inst = learner_losses[t] - comp_loss;
        cumulative += inst;
        let (y_norm, projected, zeta) = rounds[t];
        trace.push(TraceRow {
            t: t + 1,
            regret: cumulative,
            instantaneous_regret: inst,
            y_norm,
            projected: projected.as_str(),
            zeta,
        });
    }
    let final_regret = cumulative;

    let bound = regret_upper_bound(&learner_config, gamma, config.horizon);
    let budget = projection_budget(&learner_config, gamma, config.horizon);
    let projections = driver.mahalanobis_projections();

    let mut audit_failures = Vec::new();
    if final_regret > bound + REGRET_SLACK {
        audit_failures.push(format!(
            "run {run_index}: regret {final_regret} exceeds bound {bound} + slack {REGRET_SLACK}"
        ));
    }
    if projections > budget {
        audit_failures.push(format!(
            "run {run_index}: {projections} Mahalanobis projections exceed budget {budget}"
        ));
    }
    // Telescoping identity: the final regret equals the sum of increments.
    let replay: f64 = trace.iter().map(|r| r.instantaneous_regret).sum();
    if (replay - final_regret).abs() > 1e-8 * (1.0 + final_regret.abs()) {
        audit_failures.push(format!(
            "run {run_index}: regret telescoping identity violated ({replay} vs {final_regret})"
        ));
    }
    if !comparator.converged {
        audit_failures.push(format!(
            "run {run_index}: comparator did not converge; regret reference is approximate"
        ));
    }

    let summary = RunSummary {
        run_index,
        final_regret,
        regret_bound: bound,
        mahalanobis_projections: projections,
        projection_budget: budget,
        grad_norm_sq_sum,
        max_y_norm,
        update_events_d2: driver.update_events(),
        projection_events_d3: projections,
        clip_rate: stream.clip_rate(),
        seed: config.seed,
    };
    Ok(RunOutput {
        summary,
        trace,
        average_decision: avg_decision,
        audit_failures,
    })
}

/// Runs every configured repetition (in parallel when enabled), audits each
/// against its regret bound and projection budget, and writes CSV output if
/// an output directory is set. Audit failures are reported in the outcome,
/// never silently dropped.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config
        .validate()
        .map_err(|errs| Error::InvalidArgument(errs.join("; ")))?;
    let learner_config = config.learner_config()?;
    let gamma = learner_config.gamma()?;
    let alpha = learner_config.alpha;
    let resolved_epsilon = learner_config.epsilon;

    let results = map_indexed(config.exec_mode, config.runs, |i| run_single(config, i));
    let mut runs = Vec::with_capacity(config.runs);
    for r in results {
        runs.push(r?);
    }
    let outcome = ExperimentOutcome {
        runs,
        resolved_epsilon,
        alpha,
        gamma,
    };
    if let Some(dir) = &config.out_dir {
        emit_csv(config, &outcome, dir)?;
    }
    Ok(outcome)
}

/// Prints a float with 17 significant digits, exponent form, locale-free.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct Metadata<'a> {
    algorithm: &'a str,
    task: Task,
    dim: usize,
    horizon: usize,
    runs: usize,
    seed: u64,
    epsilon: f64,
    hysteresis: f64,
    d_prime: Option<usize>,
    domain_radius: f64,
    grad_bound: f64,
    alpha: f64,
    gamma: f64,
    feature_scale: f64,
    rng: &'a str,
    data_scaling: &'a str,
    clip_rates: Vec<f64>,
}

/// Writes `summary.csv`, optional `trace_run{i}.csv`, and `metadata.json`
/// under `dir`. UTF-8, `\n` line endings, decimal point, floats at 17
/// significant digits; byte-identical across repeated invocations.
pub fn emit_csv(
    config: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut summary = String::new();
    summary.push_str(
        "run,final_regret,regret_bound,mahalanobis_projections,projection_budget,\
         grad_norm_sq_sum,max_y_norm,update_events_d2,projection_events_d3,clip_rate,seed\n",
    );
    for run in &outcome.runs {
        let s = &run.summary;
        writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.run_index,
            fmt_f64(s.final_regret),
            fmt_f64(s.regret_bound),
            s.mahalanobis_projections,
            s.projection_budget,
            fmt_f64(s.grad_norm_sq_sum),
            fmt_f64(s.max_y_norm),
            s.update_events_d2,
            s.projection_events_d3,
            fmt_f64(s.clip_rate),
            s.seed,
        )
        .expect("string write cannot fail");
    }
    std::fs::write(dir.join("summary.csv"), summary)?;

    if config.emit_per_round {
        for run in &outcome.runs {
            let mut body = String::new();
            body.push_str("t,regret,instantaneous_regret,y_norm,projected,zeta_t\n");
            for row in &run.trace {
                writeln!(
                    body,
                    "{},{},{},{},{},{}",
                    row.t,
                    fmt_f64(row.regret),
                    fmt_f64(row.instantaneous_regret),
                    fmt_f64(row.y_norm),
                    row.projected,
                    fmt_f64(row.zeta),
                )
                .expect("string write cannot fail");
            }
            std::fs::write(
                dir.join(format!("trace_run{}.csv", run.summary.run_index)),
                body,
            )?;
        }
    }

    let meta = Metadata {
        algorithm: config.algorithm.as_str(),
        task: config.task,
        dim: config.dim,
        horizon: config.horizon,
        runs: config.runs,
        seed: config.seed,
        epsilon: outcome.resolved_epsilon,
        hysteresis: config.hysteresis,
        d_prime: config.d_prime,
        domain_radius: config.domain_radius,
        grad_bound: GRAD_BOUND,
        alpha: outcome.alpha,
        gamma: outcome.gamma,
        feature_scale: default_feature_scale(config.task),
        rng: "ChaCha8, seeded with `seed`; run r reads sub-stream 1+r, held-out data sub-stream 2^32+r",
        data_scaling: "folded-Gaussian samples are scaled by feature_scale, then any sample whose \
                       worst-case gradient over the domain exceeds grad_bound is rescaled to meet \
                       it exactly; per-run clip rates below",
        clip_rates: outcome.runs.iter().map(|r| r.summary.clip_rate).collect(),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::InvalidArgument(format!("metadata serialization failed: {e}")))?;
    std::fs::write(dir.join("metadata.json"), json + "\n")?;
    Ok(())
}

/// Renders the terminal comparison table for `--summary-table`.
pub fn summary_table(outcome: &ExperimentOutcome) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:>4}  {:>14}  {:>14}  {:>8}  {:>8}  {:>12}  {:>10}",
        "run", "regret", "bound", "mproj", "budget", "G_T", "max ‖y‖"
    )
    .unwrap();
    for run in &outcome.runs {
        let s = &run.summary;
        writeln!(
            out,
            "{:>4}  {:>14.6}  {:>14.6}  {:>8}  {:>8}  {:>12.6}  {:>10.4}",
            s.run_index,
            s.final_regret,
            s.regret_bound,
            s.mahalanobis_projections,
            s.projection_budget,
            s.grad_norm_sq_sum,
            s.max_y_norm,
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_horizon_yields_empty_trace_and_zero_regret() {
        let mut config = ExperimentConfig::new(Algorithm::Lightons, Task::Linear, 4, 0);
        config.runs = 2;
        let outcome = run_experiment(&config).unwrap();
        assert_eq!(outcome.runs.len(), 2);
        for run in &outcome.runs {
            assert!(run.trace.is_empty());
            assert_eq!(run.summary.final_regret, 0.0);
            assert_eq!(run.summary.mahalanobis_projections, 0);
            assert!(run.audit_failures.is_empty());
        }
    }

    #[test]
    fn validation_lists_all_errors() {
        let mut config = ExperimentConfig::new(Algorithm::LightonsSketch, Task::Linear, 0, 10);
        config.runs = 0;
        config.hysteresis = 0.5;
        config.domain_radius = -1.0;
        let errs = config.validate().unwrap_err();
        assert!(errs.len() >= 4, "expected exhaustive listing, got {errs:?}");
    }

    #[test]
    fn short_run_passes_audits() {
        let mut config = ExperimentConfig::new(Algorithm::Lightons, Task::Linear, 5, 300);
        config.runs = 2;
        config.seed = 3;
        let outcome = run_experiment(&config).unwrap();
        assert!(outcome.audit_failures().is_empty(), "{:?}", outcome.audit_failures());
        for run in &outcome.runs {
            assert_eq!(run.trace.len(), 300);
            assert!(run.summary.final_regret <= run.summary.regret_bound + REGRET_SLACK);
        }
    }

    #[test]
    fn seventeen_digit_float_format() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn emitted_files_are_byte_identical_across_invocations() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::new(Algorithm::LightonsCore, Task::Logistic, 4, 120);
        config.runs = 2;
        config.emit_per_round = true;
        let path_a = dir.path().join("a");
        let path_b = dir.path().join("b");
        config.out_dir = Some(path_a.clone());
        run_experiment(&config).unwrap();
        config.out_dir = Some(path_b.clone());
        run_experiment(&config).unwrap();
        for name in ["summary.csv", "trace_run0.csv", "trace_run1.csv", "metadata.json"] {
            let a = std::fs::read(path_a.join(name)).unwrap();
            let b = std::fs::read(path_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between invocations");
        }
    }

    #[test]
    fn no_trace_files_without_emit_per_round() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::new(Algorithm::Lightons, Task::Linear, 3, 50);
        config.runs = 2;
        config.out_dir = Some(dir.path().to_path_buf());
        run_experiment(&config).unwrap();
        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert!(names.contains(&"summary.csv".to_string()));
        assert!(names.contains(&"metadata.json".to_string()));
        assert!(names.iter().all(|n| !n.starts_with("trace_run")));
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 3, "header plus one row per run");
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut config = ExperimentConfig::new(Algorithm::Ons, Task::Linear, 4, 150);
        config.runs = 3;
        config.exec_mode = ExecMode::Sequential;
        let seq = run_experiment(&config).unwrap();
        config.exec_mode = ExecMode::Parallel;
        let par = run_experiment(&config).unwrap();
        for (a, b) in seq.runs.iter().zip(&par.runs) {
            assert_eq!(a.summary.final_regret, b.summary.final_regret);
            assert_eq!(
                a.summary.mahalanobis_projections,
                b.summary.mahalanobis_projections
            );
        }
    }
}
