use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use polystab::ensemble::{
    read_checkpoints_csv, simulate_ensemble, simulate_ensemble_with_threads, CheckpointStats,
    MomentSeries, SimConfig, SimError,
};
use polystab::integrators::Scheme;
use polystab::model::{cubic_counterexample, ProblemSpec, SdeProblem, StabilityConstants};
use polystab::stability::verify::{default_checks, run_checks};
use polystab::stability::{
    bem_envelope, counterexample_lower_bound, counterexample_start, em_envelope, estimate_decay_exponent,
    invariant_threshold, DecayEstimate, DecayOptions, VerifyGrid,
};
use serde::Serialize;

use crate::spec::ExperimentSpec;
use crate::Failure;

pub const THREADS_ENV: &str = "POLYSTAB_THREADS";

fn thread_count() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::usage(anyhow!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::InvalidConfig(_) | SimError::Io(_) | SimError::Parse { .. } => Failure::usage(e.into()),
        SimError::Conformance(_) => Failure::conformance(e.into()),
        SimError::TooManyFailures { .. } | SimError::ThreadPool(_) => Failure::numerical(e.into()),
    }
}

fn run_ensemble(problem: &SdeProblem, cfg: &SimConfig) -> Result<MomentSeries, Failure> {
    let result = match thread_count()? {
        Some(n) => simulate_ensemble_with_threads(problem, cfg, n),
        None => simulate_ensemble(problem, cfg),
    };
    result.map_err(sim_failure)
}

fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match thread_count()? {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::numerical(e.into()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[derive(Serialize)]
struct SidecarConfig<'a> {
    problem: &'a ProblemSpec,
    constants: StabilityConstants,
    config: &'a SimConfig,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    problem: &'a str,
    scheme: Scheme,
    final_checkpoint: &'a CheckpointStats,
    lower_bound: bool,
    first_blow_up_step: Option<u64>,
    failed_paths: usize,
    decay: Option<DecayEstimate>,
    decay_error: Option<String>,
}

fn envelope_column(problem: &SdeProblem, cfg: &SimConfig, series: &MomentSeries) -> Option<String> {
    let m0: f64 = cfg.initial_value.iter().map(|v| v * v).sum();
    let StabilityConstants { k1, c, kbar } = problem.constants();
    let mut out = String::from("k,t,envelope\n");
    for cp in &series.checkpoints {
        let value = match cfg.scheme {
            Scheme::Em => em_envelope(cp.k, cfg.dt, k1, c, m0),
            Scheme::Bem => bem_envelope(cp.k, cfg.dt, k1, c, m0, kbar),
        };
        match value {
            Ok(v) => writeln!(out, "{},{:?},{:?}", cp.k, cp.t, v).expect("string write"),
            Err(e) => {
                log::warn!("envelope not written: {e}");
                return None;
            }
        }
    }
    Some(out)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::usage)?;
    Ok(path)
}

pub fn simulate(spec: &ExperimentSpec) -> Result<(), Failure> {
    let problem = spec.problem.build().map_err(|e| Failure::usage(e.into()))?;
    let cfg = spec.sim_config().map_err(Failure::usage)?;
    let series = run_ensemble(&problem, &cfg)?;

    let (decay, decay_error) = match estimate_decay_exponent(&series.checkpoints, problem.k1(), spec.analysis.into()) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let last = series.final_checkpoint();
    let report = SimulateReport {
        problem: problem.label(),
        scheme: cfg.scheme,
        final_checkpoint: last,
        lower_bound: last.is_lower_bound(),
        first_blow_up_step: series.checkpoints.iter().find(|c| c.blown_up > 0).map(|c| c.k),
        failed_paths: series.failures.len(),
        decay,
        decay_error,
    };

    let mut summary = format!(
        "{} {}: t = {} mean_square = {:e} (se {:e}) surviving = {} blown_up = {}",
        problem.label(),
        cfg.scheme.label(),
        last.t,
        last.mean_square,
        last.std_error,
        last.surviving,
        last.blown_up
    );
    match (&report.decay, &report.decay_error) {
        (Some(d), _) => write!(
            summary,
            "\ntail slope {:.4} ± {:.4} over t ∈ [{}, {}], bound {} (conforms: {})",
            d.slope, d.slope_std_error, d.fit_window.0, d.fit_window.1, d.theoretical_bound, d.conforms
        ),
        (None, Some(e)) => write!(summary, "\nno decay estimate: {e}"),
        (None, None) => Ok(()),
    }
    .expect("string write");

    match &spec.output.dir {
        None => {
            print!("{}", series.to_csv_string());
            eprintln!("{summary}");
        }
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .map_err(Failure::usage)?;
            let sidecar = SidecarConfig { problem: &spec.problem, constants: problem.constants(), config: &cfg };
            write_file(dir, "moments.csv", &series.to_csv_string())?;
            write_file(dir, "config.json", &(serde_json::to_string_pretty(&sidecar).expect("json") + "\n"))?;
            write_file(dir, "report.json", &(serde_json::to_string_pretty(&report).expect("json") + "\n"))?;
            if spec.output.envelope {
                if let Some(env) = envelope_column(&problem, &cfg, &series) {
                    write_file(dir, "envelope.csv", &env)?;
                }
            }
            println!("{summary}");
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    csv: String,
    k1: f64,
    checkpoints: usize,
    estimate: DecayEstimate,
}

pub fn analyze(csv: &Path, k1: f64, opts: DecayOptions) -> Result<(), Failure> {
    let file = fs::File::open(csv)
        .with_context(|| format!("opening {}", csv.display()))
        .map_err(Failure::usage)?;
    let rows = read_checkpoints_csv(file)
        .map_err(|e| Failure::usage(anyhow!("{}: {e}", csv.display())))?;
    let estimate = estimate_decay_exponent(&rows, k1, opts).map_err(|e| Failure::numerical(e.into()))?;
    let conforms = estimate.conforms;
    let report = AnalyzeReport { csv: csv.display().to_string(), k1, checkpoints: rows.len(), estimate };
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    if conforms {
        Ok(())
    } else {
        Err(Failure::conformance(anyhow!(
            "slope {} exceeds bound {} + tolerance {}",
            report.estimate.slope,
            report.estimate.theoretical_bound,
            report.estimate.tolerance
        )))
    }
}

pub fn verify_gamma(grid: &VerifyGrid, invert: &[String], json: bool) -> Result<(), Failure> {
    let checks = default_checks(grid);
    for name in invert {
        if !checks.iter().any(|c| &c.name == name) {
            let known: Vec<_> = checks.iter().map(|c| c.name.as_str()).collect();
            return Err(Failure::usage(anyhow!("unknown check `{name}`; known: {}", known.join(", "))));
        }
    }
    let report = in_pool(|| run_checks(&checks, invert))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    } else {
        for c in &report.checks {
            println!(
                "{} {:<22} points {:>8}  worst margin {:>12.4e}  at {}",
                if c.pass() { "PASS" } else { "FAIL" },
                c.name,
                c.evaluated,
                c.worst_margin,
                c.worst_point
            );
            for v in &c.violations {
                println!("     violation: {v}");
            }
            if c.violation_count as usize > c.violations.len() {
                println!("     ... {} violations in total", c.violation_count);
            }
        }
    }
    if report.pass() {
        Ok(())
    } else {
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass()).map(|c| c.name.as_str()).collect();
        Err(Failure::conformance(anyhow!("failed checks: {}", failed.join(", "))))
    }
}

pub struct CounterexampleArgs {
    pub dt: f64,
    pub cap: f64,
    pub k_max: u64,
    pub paths: u64,
    pub steps: u64,
    pub seed: u64,
    pub x0: Option<f64>,
}

pub fn counterexample(a: &CounterexampleArgs) -> Result<(), Failure> {
    let seq = counterexample_lower_bound(a.dt, a.k_max).map_err(|e| Failure::usage(e.into()))?;
    println!("lower-bound recursion, dt = {}", a.dt);
    println!("{:>4}  {:>24}  {:>24}  invariant", "k", "b_k", "threshold");
    for &(k, b) in &seq.values {
        let thr = invariant_threshold(a.dt, k);
        println!("{k:>4}  {b:>24.10e}  {thr:>24.10e}  {}", if b >= thr { "ok" } else { "FAIL" });
    }
    if let Some(k) = seq.diverged_at {
        println!("diverged at step {k} (overflow)");
    }
    let exceeds = seq.exceeds(a.cap);
    match exceeds {
        Some(k) => println!("exceeds cap {:e} at step {k}", a.cap),
        None => println!("does not exceed cap {:e} within {} steps", a.cap, a.k_max),
    }
    println!(
        "induction invariant: {}",
        match seq.invariant_failure {
            None => format!("holds at all {} computed steps", seq.values.len()),
            Some(k) => format!("fails at step {k}"),
        }
    );

    let problem = cubic_counterexample();
    let x0 = match a.x0 {
        Some(x0) => x0,
        None => counterexample_start(a.dt).map_err(|e| Failure::usage(e.into()))?,
    };
    let cfg = SimConfig::new(Scheme::Em, a.dt, a.steps, a.paths, a.seed, vec![x0])
        .with_checkpoints((0..=a.steps).collect())
        .with_blow_up_cap(a.cap);
    let series = run_ensemble(&problem, &cfg)?;
    let last = series.final_checkpoint();
    let first = series.checkpoints.iter().find(|c| c.blown_up > 0);
    let monotone = match first {
        None => true,
        Some(f) => series
            .checkpoints
            .iter()
            .skip_while(|c| c.k < f.k)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1].capped_mean_abs >= w[0].capped_mean_abs),
    };
    println!(
        "EM ensemble (x0 = {x0}, {} paths, {} steps, seed {}): blown up {} ({:.1}%), first blow-up at step {}",
        a.paths,
        a.steps,
        a.seed,
        last.blown_up,
        100.0 * last.blown_up as f64 / a.paths as f64,
        first.map_or("none".to_string(), |c| c.k.to_string())
    );
    println!("capped mean |Y_k| non-decreasing after the first blow-up: {monotone}");

    if seq.invariant_failure.is_some() || exceeds.is_none() {
        return Err(Failure::conformance(anyhow!("lower-bound recursion does not behave as claimed")));
    }
    Ok(())
}
