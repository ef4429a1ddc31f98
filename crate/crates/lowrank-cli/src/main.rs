//! Command-line front end: factor completion from triplet files, kernel
//! PCA pipelines, the Nyström baseline, experiment batches, and the
//! randomized verification suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lowrank::experiment::{run_experiment, ExperimentConfig};
use lowrank::kernels::{self, Dataset, KernelSpec};
use lowrank::optimizer::{self, AlphaMode, LambdaMode, SolveConfig};
use lowrank::verify::{
    run_deviation_suite, run_gradient_suite, run_hadamard_suite, run_k_identity_suite, SuiteOutcome,
};
use lowrank::{baselines, load_sampled, metrics, sample_mask};

#[derive(Parser)]
#[command(
    name = "lowrank",
    about = "Rank-r approximation of PSD matrices from sparsely sampled entries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a sampled symmetric matrix from a triplet file.
    Complete(CompleteArgs),
    /// Kernel PCA on a dataset via entry sampling and factorization.
    Kpca(KpcaArgs),
    /// Nyström column-sampling approximation of a kernel matrix.
    Nystrom(NystromArgs),
    /// Run an experiment batch described by a JSON config.
    Experiment(ExperimentArgs),
    /// Run randomized verification suites; exits with code 2 on failure.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CompleteArgs {
    /// Triplet file: header `n nnz_pairs`, then `i j value` lines.
    matrix_file: PathBuf,
    #[arg(long)]
    rank: usize,
    /// Explicit row-norm threshold (default: auto from observed entries).
    #[arg(long)]
    alpha: Option<f64>,
    /// Explicit regularization weight (default: auto from the sample).
    #[arg(long)]
    lambda: Option<f64>,
    /// Use the non-square-root automatic threshold.
    #[arg(long, conflicts_with = "alpha")]
    alpha_linf: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Output factor file.
    #[arg(long, default_value = "factor.txt")]
    output: PathBuf,
    /// Optional JSONL iteration trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum KernelKind {
    Radial,
    Polynomial,
    Linear,
}

#[derive(Args)]
struct KpcaArgs {
    /// Dataset file: header `n d [has_labels]`, one point per line.
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelKind::Radial)]
    kernel: KernelKind,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long)]
    rank: usize,
    /// Entry sampling rate in (0, 1].
    #[arg(long)]
    sample_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    #[arg(long, default_value = "factor.txt")]
    output: PathBuf,
    /// Output file for cluster labels (one per line).
    #[arg(long, default_value = "labels.txt")]
    labels: PathBuf,
}

#[derive(Args)]
struct NystromArgs {
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelKind::Radial)]
    kernel: KernelKind,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long)]
    columns: usize,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "factor.txt")]
    output: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    config: PathBuf,
    /// Report destination (default: the config's `output`, else report.json).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Box-plot quantile CSV for figures.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Suite {
    /// Deterministic bilinear deviation bound.
    LemmaConcern,
    /// Hadamard-product nuclear norm bound.
    Hadamard,
    /// Four-term decomposition identity of the auxiliary function.
    KIdentity,
    /// Finite-difference checks of gradient and Hessian quadratic form.
    Gradients,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run (default: all).
    #[arg(long, value_enum)]
    suite: Vec<Suite>,
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn kernel_spec(kind: KernelKind, gamma: f64, degree: u32, offset: f64) -> KernelSpec {
    match kind {
        KernelKind::Radial => KernelSpec::Radial { gamma },
        KernelKind::Polynomial => KernelSpec::Polynomial { degree, offset },
        KernelKind::Linear => KernelSpec::Linear,
    }
}

fn run() -> Result<ExitCode, Box<dyn std::error::Error>> {
    let cli = Cli::parse();
    match cli.command {
        Command::Complete(args) => {
            let m = load_sampled(&args.matrix_file)?;
            let mut cfg = SolveConfig::new(args.rank);
            cfg.init_seed = args.seed;
            cfg.max_iters = args.max_iters;
            if let Some(a) = args.alpha {
                cfg.alpha_mode = AlphaMode::Fixed(a);
            } else if args.alpha_linf {
                cfg.alpha_mode = AlphaMode::AutoLinf;
            }
            if let Some(l) = args.lambda {
                cfg.lambda_mode = LambdaMode::Fixed(l);
            }
            let (x, trace) = optimizer::solve(&m, &cfg)?;
            x.save(&args.output)?;
            if let Some(trace_path) = &args.trace {
                trace.write_jsonl(trace_path)?;
            }
            eprintln!(
                "completed: n={} r={} iters={} reason={:?} f={:.6e} grad={:.6e}",
                m.n(),
                args.rank,
                trace.iterations.len(),
                trace.reason,
                trace.final_f(),
                trace.final_grad_norm()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Kpca(args) => {
            let data = Dataset::load(&args.dataset)?;
            let spec = kernel_spec(args.kernel, args.gamma, args.degree, args.offset);
            let mask = sample_mask(data.n(), args.sample_rate, args.seed)?;
            let sample = kernels::build_sampled_kernel(&data, &spec, &mask)?;
            drop(mask);
            let mut cfg = SolveConfig::new(args.rank);
            cfg.init_seed = args.seed ^ 0xA5A5;
            let (x, trace) = optimizer::solve(&sample, &cfg)?;
            x.save(&args.output)?;
            let labels = metrics::kmeans_rows(&x, args.clusters, 20, args.seed ^ 0x3333)?;
            let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
            std::fs::write(&args.labels, text)?;
            eprintln!(
                "kpca: n={} r={} pairs={} iters={} reason={:?}",
                data.n(),
                args.rank,
                sample.nnz_pairs(),
                trace.iterations.len(),
                trace.reason
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Nystrom(args) => {
            let data = Dataset::load(&args.dataset)?;
            let spec = kernel_spec(args.kernel, args.gamma, args.degree, args.offset);
            let x = baselines::nystrom(
                |i, j| {
                    kernels::kernel_eval(&spec, data.point(i), data.point(j))
                        .expect("dataset points share one dimension")
                },
                data.n(),
                args.columns,
                args.rank,
                args.seed,
            )?;
            x.save(&args.output)?;
            eprintln!(
                "nystrom: n={} c={} r={} rate={:.6}",
                data.n(),
                args.columns,
                args.rank,
                baselines::nystrom_effective_rate(data.n(), args.columns)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment(args) => {
            let text = std::fs::read_to_string(&args.config)?;
            let cfg: ExperimentConfig = serde_json::from_str(&text)?;
            let report = run_experiment(&cfg)?;
            let output = args
                .output
                .clone()
                .or_else(|| cfg.output.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("report.json"));
            report.save_json(&output)?;
            if let Some(csv) = &args.csv {
                report.save_csv(csv)?;
            }
            eprintln!(
                "experiment: {} sweep points, {} trials each, {:.1}s",
                report.points.len(),
                cfg.trials,
                report.total_wall_secs
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let suites = if args.suite.is_empty() {
                vec![
                    Suite::LemmaConcern,
                    Suite::Hadamard,
                    Suite::KIdentity,
                    Suite::Gradients,
                ]
            } else {
                args.suite.clone()
            };
            let mut outcomes: Vec<SuiteOutcome> = Vec::new();
            for suite in suites {
                let outcome = match suite {
                    Suite::LemmaConcern => run_deviation_suite(args.instances, args.seed)?,
                    Suite::Hadamard => run_hadamard_suite(args.instances, args.seed)?,
                    Suite::KIdentity => run_k_identity_suite(args.instances, args.seed)?,
                    Suite::Gradients => run_gradient_suite(args.instances, args.seed)?,
                };
                outcomes.push(outcome);
            }
            let all_passed = outcomes.iter().all(|o| o.passed());
            println!("{}", serde_json::to_string_pretty(&outcomes)?);
            if all_passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
