//! Experiment CLI.
//!
//! Exit codes: 0 on success with all audits passing, 1 on configuration or
//! I/O errors, 2 when a run violates its regret bound or projection budget.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, ValueEnum};

use lightons::harness::{
    run_experiment, summary_table, Algorithm, EpsilonChoice, ExperimentConfig,
};
use lightons::tasks::Task;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Ons,
    Lightons,
    LightonsCore,
    LightonsSketch,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Ons => Algorithm::Ons,
            AlgorithmArg::Lightons => Algorithm::Lightons,
            AlgorithmArg::LightonsCore => Algorithm::LightonsCore,
            AlgorithmArg::LightonsSketch => Algorithm::LightonsSketch,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Linear,
    Logistic,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Linear => Task::Linear,
            TaskArg::Logistic => Task::Logistic,
        }
    }
}

fn parse_epsilon(s: &str) -> Result<EpsilonChoice, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(EpsilonChoice::Auto);
    }
    s.parse::<f64>()
        .map(EpsilonChoice::Fixed)
        .map_err(|_| format!("expected 'auto' or a float, got '{s}'"))
}

/// Online exp-concave optimization experiments with reproducible seeds and
/// CSV output.
#[derive(Debug, Parser)]
#[command(name = "lightons", version, disable_help_flag = false)]
struct Cli {
    /// Learner to run.
    #[arg(long, value_enum)]
    algorithm: AlgorithmArg,

    /// Loss family.
    #[arg(long, value_enum)]
    task: TaskArg,

    /// Decision dimension.
    #[arg(long, default_value_t = 10)]
    d: usize,

    /// Number of online rounds per run.
    #[arg(long = "T", default_value_t = 10_000)]
    horizon: usize,

    /// Independent repetitions (one RNG sub-stream each).
    #[arg(long, default_value_t = 5)]
    runs: usize,

    /// Base seed; run r uses sub-stream 1+r.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Preconditioner coefficient: 'auto' (= d·log T) or a positive float.
    #[arg(long, value_parser = parse_epsilon, default_value = "auto")]
    epsilon: EpsilonChoice,

    /// Hysteresis coefficient (> 1; ignored by ons).
    #[arg(long, default_value_t = 2.0)]
    k: f64,

    /// Sketch size for lightons-sketch (1 <= d' <= d/2).
    #[arg(long = "d-prime")]
    d_prime: Option<usize>,

    /// Domain radius: decisions live in the ball of this radius.
    #[arg(long, default_value_t = 0.5)]
    radius: f64,

    /// Output directory for summary.csv / trace_run{i}.csv / metadata.json.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write one per-round trace CSV per run.
    #[arg(long)]
    emit_per_round: bool,

    /// Print a per-run comparison table to stdout.
    #[arg(long)]
    summary_table: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };

    let mut config = ExperimentConfig::new(
        cli.algorithm.into(),
        cli.task.into(),
        cli.d,
        cli.horizon,
    );
    config.runs = cli.runs;
    config.seed = cli.seed;
    config.epsilon = cli.epsilon;
    config.hysteresis = cli.k;
    config.d_prime = cli.d_prime;
    config.domain_radius = cli.radius;
    config.out_dir = cli.out;
    config.emit_per_round = cli.emit_per_round;

    if let Err(errors) = config.validate() {
        for e in &errors {
            eprintln!("config error: {e}");
        }
        return ExitCode::from(1);
    }

    let outcome = match run_experiment(&config) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    if cli.summary_table {
        print!("{}", summary_table(&outcome));
    } else {
        for run in &outcome.runs {
            let s = &run.summary;
            println!(
                "run {}: regret {:.6} (bound {:.6}), {} Mahalanobis projections (budget {})",
                s.run_index,
                s.final_regret,
                s.regret_bound,
                s.mahalanobis_projections,
                s.projection_budget
            );
        }
    }

    let failures = outcome.audit_failures();
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("audit failure: {f}");
        }
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
