mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use polystab::integrators::Scheme;
use polystab::model::{builtin, ProblemSpec, BUILTIN_LABELS};
use polystab::stability::{DecayOptions, VerifyGrid, DEFAULT_TOLERANCE, DEFAULT_WINDOW_FRACTION};

use crate::commands::CounterexampleArgs;
use crate::spec::{AnalysisSpec, ExperimentSpec, OutputSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CONFORMANCE: u8 = 3;

/// An error with the exit code it maps to.
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: anyhow::Error) -> Self {
        Self { code: EXIT_USAGE, error }
    }

    pub fn numerical(error: anyhow::Error) -> Self {
        Self { code: EXIT_NUMERICAL, error }
    }

    pub fn conformance(error: anyhow::Error) -> Self {
        Self { code: EXIT_CONFORMANCE, error }
    }
}

/// Mean-square polynomial stability experiments for EM and backward EM.
///
/// Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
/// 3 conformance failure. POLYSTAB_THREADS caps the worker count without
/// changing results.
#[derive(Parser)]
#[command(name = "polystab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo ensemble and write the moment series.
    Simulate(SimulateArgs),
    /// Fit the tail decay exponent of a moment CSV.
    Analyze(AnalyzeArgs),
    /// Check the gamma kernel and the gamma-ratio bounds on grids.
    VerifyGamma(VerifyArgs),
    /// Lower-bound recursion and EM blow-up for the cubic counterexample.
    Counterexample(CounterArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON experiment spec; excludes the individual flags below.
    #[arg(long, conflicts_with_all = ["problem", "scheme", "dt", "paths", "steps", "seed", "x0", "k1", "c"])]
    spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    problem: Option<String>,
    #[arg(long, required_unless_present = "spec")]
    scheme: Option<Scheme>,
    #[arg(long, required_unless_present = "spec")]
    dt: Option<f64>,
    #[arg(long, required_unless_present = "spec")]
    paths: Option<u64>,
    #[arg(long, required_unless_present = "spec")]
    steps: Option<u64>,
    /// Seeds are mandatory: there is no clock-based default.
    #[arg(long, required_unless_present = "spec")]
    seed: Option<u64>,
    /// Initial value (defaults to the problem's builtin start).
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    /// Override the problem's K1.
    #[arg(long)]
    k1: Option<f64>,
    /// Override the problem's C.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = polystab::ensemble::DEFAULT_CHECKPOINTS)]
    checkpoints: usize,
    #[arg(long, default_value_t = polystab::ensemble::DEFAULT_BLOW_UP_CAP)]
    cap: f64,
    /// Fail when the step size breaks the stability theorem's hypotheses.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = DEFAULT_WINDOW_FRACTION)]
    window_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Output directory; without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write envelope.csv next to the moments.
    #[arg(long, requires = "out")]
    envelope: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Moment CSV written by `simulate`.
    csv: PathBuf,
    /// Builtin problem supplying K1.
    #[arg(long, required_unless_present = "k1")]
    problem: Option<String>,
    /// K1 for the bound −(2K1 − 1); overrides --problem.
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_WINDOW_FRACTION)]
    window_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    k_max: u64,
    /// Random parameter sets for the product identity.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = VerifyGrid::default().seed)]
    seed: u64,
    /// Negate the margins of the named check (exercises the failure path).
    #[arg(long)]
    invert: Vec<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CounterArgs {
    #[arg(long)]
    dt: f64,
    #[arg(long, default_value_t = 1e12)]
    cap: f64,
    #[arg(long, default_value_t = 100)]
    k_max: u64,
    #[arg(long, default_value_t = 1000)]
    paths: u64,
    #[arg(long, default_value_t = 200)]
    steps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Ensemble start; defaults to the smallest start whose first step clears
    /// the divergence threshold.
    #[arg(long)]
    x0: Option<f64>,
}

fn simulate_spec(a: SimulateArgs) -> Result<ExperimentSpec, Failure> {
    if let Some(path) = a.spec {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::usage)?;
        let mut spec = ExperimentSpec::from_json(&text).map_err(Failure::usage)?;
        if a.out.is_some() {
            spec.output = OutputSpec { dir: a.out, envelope: a.envelope || spec.output.envelope };
        }
        return Ok(spec);
    }
    let label = a.problem.expect("required by clap");
    if builtin(&label).is_err() {
        return Err(Failure::usage(anyhow!(
            "unknown problem `{label}`; builtins: {}",
            BUILTIN_LABELS.join(", ")
        )));
    }
    Ok(ExperimentSpec {
        problem: ProblemSpec { label, k1: a.k1, c: a.c, initial_value: a.x0.map(|v| vec![v]) },
        scheme: a.scheme.expect("required by clap"),
        dt: a.dt.expect("required by clap"),
        num_steps: a.steps.expect("required by clap"),
        num_paths: a.paths.expect("required by clap"),
        seed: a.seed.expect("required by clap"),
        checkpoints: None,
        checkpoint_count: a.checkpoints,
        blow_up_cap: a.cap,
        strict: a.strict,
        solver: Default::default(),
        analysis: AnalysisSpec { window_fraction: a.window_fraction, tolerance: a.tolerance },
        output: OutputSpec { dir: a.out, envelope: a.envelope },
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&simulate_spec(a)?),
        Command::Analyze(a) => {
            let k1 = match (a.k1, &a.problem) {
                (Some(k1), _) => k1,
                (None, Some(label)) => builtin(label).map_err(|e| Failure::usage(e.into()))?.k1(),
                (None, None) => unreachable!("clap requires one of them"),
            };
            let opts = DecayOptions { window_fraction: a.window_fraction, tolerance: a.tolerance };
            commands::analyze(&a.csv, k1, opts)
        }
        Command::VerifyGamma(a) => {
            let grid = VerifyGrid { k_max: a.k_max, identity_samples: a.samples, seed: a.seed, ..VerifyGrid::default() };
            commands::verify_gamma(&grid, &a.invert, a.json)
        }
        Command::Counterexample(a) => commands::counterexample(&CounterexampleArgs {
            dt: a.dt,
            cap: a.cap,
            k_max: a.k_max,
            paths: a.paths,
            steps: a.steps,
            seed: a.seed,
            x0: a.x0,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
