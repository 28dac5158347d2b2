mod alloc;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specclip::{Error, ErrorClass};

use alloc::CountingAlloc;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc::new();

#[derive(Parser, Debug)]
#[command(
    name = "specclip",
    version,
    about = "Stable linear dynamics by spectral clipping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct SeedArg {
    /// Random seed; defaults to $SPECCLIP_SEED, then 0.
    #[arg(long, env = "SPECCLIP_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum KindArg {
    Linear,
    Controlled,
    Polynomial,
    Corrupted,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MetricArg {
    /// Mean absolute error per coordinate.
    Mae,
    /// Mean squared error per coordinate.
    Mse,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic trajectory dataset.
    Gen {
        #[arg(long, value_enum, default_value = "linear")]
        kind: KindArg,
        /// State dimension (default 4; the polynomial system has 2).
        #[arg(long)]
        n: Option<usize>,
        /// Input dimension for the controlled kind.
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Spectral radius of the ground-truth system.
        #[arg(long, default_value_t = 0.9)]
        rho: f64,
        #[arg(long, default_value_t = 5)]
        n_traj: usize,
        /// States per trajectory.
        #[arg(short = 'T', long = "length", default_value_t = 20)]
        length: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        truncate_to: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        failure_fraction: f64,
        /// Growth rate of x₁ in the polynomial system.
        #[arg(long, default_value_t = 0.9)]
        poly_a1: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth linear model.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Least-squares fit of a linear model (controlled if the data has inputs).
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clip the spectrum of a model.
    Clip {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a Koopman model on a polynomial lifting, optionally clipped.
    KoopmanFit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll a model forward and write the predicted trajectories.
    Rollout {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        /// `zero`, `unit`, a file of numbers, or a trajectory CSV (one rollout per trajectory).
        #[arg(long, default_value = "unit")]
        x0: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Predicted trajectories (as written by `rollout`).
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        pred: Option<PathBuf>,
        /// Predict from each true initial state with this model instead.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        horizon: Option<usize>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value = "mae")]
        metric: MetricArg,
        /// Per-step error curve CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a subset of the model's modes.
    Modes {
        #[arg(long)]
        model: PathBuf,
        /// `all`, `stable`, `unstable`, or 1-based indices/ranges like `1-3,5`.
        #[arg(long, default_value = "all")]
        subset: String,
        #[arg(long, default_value = "unit")]
        x0: String,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit once, then clip, roll out and evaluate for each eps.
    SweepEps {
        #[arg(long)]
        data: PathBuf,
        /// Evaluation trajectories (defaults to the training data).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Fit a Koopman model of this degree instead of a linear one.
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1e-5,1e-2")]
        values: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        #[arg(long, value_enum, default_value = "mae")]
        metric: MetricArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time spectral clipping across dimensions.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn report(err: &Error) -> ExitCode {
    eprintln!(
        "error code={} message={}",
        err.code(),
        one_line(&err.to_string())
    );
    ExitCode::from(exit_code(err.class()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid usage");
            let msg = first.trim_start_matches("error:").trim();
            eprintln!("error code=UsageError message={}", one_line(msg));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command, &ALLOC) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
