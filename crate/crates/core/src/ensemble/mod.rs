//! Monte Carlo estimation of `E|X_k|²` along a scheme.
//!
//! Paths are grouped into fixed blocks of [`BLOCK_SIZE`] consecutive ids. Each
//! block is simulated serially and its statistics merged pairwise in block
//! order, so the result is bit-identical for any thread count.

mod rng;
mod series;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrators::{
    bem_step_in_place, em_step_in_place, theorem_conformance, ImplicitSolverConfig, Scheme,
    StepContext, StepWorkspace,
};
use crate::model::SdeProblem;

pub use rng::{brownian_increment, PathNoise};
pub use series::{
    read_checkpoints_csv, write_checkpoints_csv, CheckpointStats, MomentSeries, PathFailure,
    CSV_HEADER,
};

pub const BLOCK_SIZE: u64 = 256;
pub const DEFAULT_BLOW_UP_CAP: f64 = 1e12;
pub const DEFAULT_CHECKPOINTS: usize = 50;
/// Runs abort once more than this fraction of paths hit a step failure.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step-size hypotheses violated: {0}")]
    Conformance(String),
    #[error("{failed} of {total} paths failed (first: path {} at step {}: {})", first.path_id, first.step, first.message)]
    TooManyFailures { failed: u64, total: u64, first: PathFailure },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub num_steps: u64,
    pub num_paths: u64,
    pub seed: u64,
    pub initial_value: Vec<f64>,
    /// Step indices at which moments are recorded; sorted, unique, within
    /// `0..=num_steps`.
    pub checkpoints: Vec<u64>,
    pub blow_up_cap: f64,
    /// Offset added to path indices when keying the noise.
    #[serde(default)]
    pub first_path_id: u64,
    /// Turn unmet step-size hypotheses into an error instead of a warning.
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub solver: ImplicitSolverConfig,
}

impl SimConfig {
    pub fn new(
        scheme: Scheme,
        dt: f64,
        num_steps: u64,
        num_paths: u64,
        seed: u64,
        initial_value: Vec<f64>,
    ) -> Self {
        Self {
            scheme,
            dt,
            num_steps,
            num_paths,
            seed,
            initial_value,
            checkpoints: geometric_checkpoints(num_steps, DEFAULT_CHECKPOINTS),
            blow_up_cap: DEFAULT_BLOW_UP_CAP,
            first_path_id: 0,
            strict: false,
            solver: ImplicitSolverConfig::default(),
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn with_blow_up_cap(mut self, cap: f64) -> Self {
        self.blow_up_cap = cap;
        self
    }

    pub fn with_strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn with_first_path_id(mut self, id: u64) -> Self {
        self.first_path_id = id;
        self
    }

    pub fn validate(&self, dimension: usize) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive and finite, got {}", self.dt));
        }
        if self.num_steps == 0 {
            return bad("num_steps must be positive".into());
        }
        if self.num_paths == 0 {
            return bad("num_paths must be positive".into());
        }
        if self.initial_value.len() != dimension {
            return bad(format!(
                "initial value has dimension {}, problem has {dimension}",
                self.initial_value.len()
            ));
        }
        if self.initial_value.iter().any(|v| !v.is_finite()) {
            return bad("initial value must be finite".into());
        }
        let x0_norm = self.initial_value.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(self.blow_up_cap > x0_norm) {
            return bad(format!(
                "blow-up cap {} must exceed |initial value| = {x0_norm}",
                self.blow_up_cap
            ));
        }
        if self.checkpoints.is_empty() {
            return bad("at least one checkpoint is required".into());
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoints must be strictly increasing".into());
        }
        if *self.checkpoints.last().unwrap() > self.num_steps {
            return bad(format!("checkpoint beyond num_steps = {}", self.num_steps));
        }
        if self.first_path_id.checked_add(self.num_paths).is_none() {
            return bad("path ids overflow u64".into());
        }
        Ok(())
    }
}

/// Roughly `count` step indices spaced geometrically over `1..=num_steps`,
/// preceded by 0.
pub fn geometric_checkpoints(num_steps: u64, count: usize) -> Vec<u64> {
    let mut out = vec![0u64];
    if num_steps == 0 {
        return out;
    }
    let count = count.max(2);
    let top = (num_steps as f64).ln();
    for i in 0..count {
        let k = (top * i as f64 / (count - 1) as f64).exp().round() as u64;
        let k = k.clamp(1, num_steps);
        if *out.last().unwrap() < k {
            out.push(k);
        }
    }
    if *out.last().unwrap() != num_steps {
        out.push(num_steps);
    }
    out
}

/// Welford accumulator for `|x|²`, plus `Σ|x|` over survivors and the
/// blow-up count (blown-up paths enter the capped mean as `count · cap`).
#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    n: u64,
    mean: f64,
    m2: f64,
    blown: u64,
    abs_sum: f64,
}

impl Accum {
    fn push(&mut self, sq: f64) {
        self.n += 1;
        let d = sq - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (sq - self.mean);
        self.abs_sum += sq.sqrt();
    }

    fn push_blown(&mut self) {
        self.blown += 1;
    }

    fn merge(a: Accum, b: Accum) -> Accum {
        let n = a.n + b.n;
        let (mean, m2) = if n == 0 {
            (0.0, 0.0)
        } else if a.n == 0 {
            (b.mean, b.m2)
        } else if b.n == 0 {
            (a.mean, a.m2)
        } else {
            let d = b.mean - a.mean;
            let (na, nb, nt) = (a.n as f64, b.n as f64, n as f64);
            (a.mean + d * nb / nt, a.m2 + b.m2 + d * d * na * nb / nt)
        };
        Accum { n, mean, m2, blown: a.blown + b.blown, abs_sum: a.abs_sum + b.abs_sum }
    }
}

struct BlockResult {
    accums: Vec<Accum>,
    failures: Vec<PathFailure>,
}

fn merge_blocks(a: BlockResult, b: BlockResult) -> BlockResult {
    let accums = a.accums.iter().zip(&b.accums).map(|(x, y)| Accum::merge(*x, *y)).collect();
    let mut failures = a.failures;
    failures.extend(b.failures);
    BlockResult { accums, failures }
}

/// Fixed-shape pairwise reduction: the tree depends only on the block count.
fn pairwise(mut blocks: Vec<BlockResult>) -> BlockResult {
    while blocks.len() > 1 {
        let mut next = Vec::with_capacity(blocks.len().div_ceil(2));
        let mut it = blocks.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge_blocks(a, b)),
                None => next.push(a),
            }
        }
        blocks = next;
    }
    blocks.pop().expect("at least one block")
}

fn simulate_block(
    problem: &SdeProblem,
    config: &SimConfig,
    paths: std::ops::Range<u64>,
) -> BlockResult {
    let dim = problem.dimension();
    let cap = config.blow_up_cap;
    let mut accums = vec![Accum::default(); config.checkpoints.len()];
    let mut failures = Vec::new();
    let mut ws = StepWorkspace::new(dim);
    let mut state = vec![0.0; dim];

    for path in paths {
        let path_id = config.first_path_id + path;
        let mut noise = PathNoise::new(config.seed, path_id, config.dt);
        state.copy_from_slice(&config.initial_value);
        let mut next_cp = 0usize;
        let mut frozen = false;
        let mut k = 0u64;
        loop {
            if next_cp < config.checkpoints.len() && config.checkpoints[next_cp] == k {
                let sq: f64 = state.iter().map(|v| v * v).sum();
                accums[next_cp].push(sq);
                next_cp += 1;
            }
            if k == config.num_steps || next_cp == config.checkpoints.len() {
                break;
            }
            let db = noise.next_increment();
            let ctx = StepContext { k, dt: config.dt, db };
            let step = match config.scheme {
                Scheme::Em => em_step_in_place(problem, &mut state, ctx, &mut ws),
                Scheme::Bem => bem_step_in_place(problem, &mut state, ctx, &config.solver, &mut ws),
            };
            k += 1;
            match step {
                Ok(()) => {
                    let sq: f64 = state.iter().map(|v| v * v).sum();
                    if !(sq.is_finite() && sq.sqrt() <= cap) {
                        frozen = true;
                    }
                }
                Err(e) => {
                    failures.push(PathFailure { path_id, step: k - 1, message: e.to_string() });
                    frozen = true;
                }
            }
            if frozen {
                break;
            }
        }
        if frozen {
            for acc in &mut accums[next_cp..] {
                acc.push_blown();
            }
        }
    }
    BlockResult { accums, failures }
}

fn check_hypotheses(problem: &SdeProblem, config: &SimConfig) -> Result<(), SimError> {
    if config.scheme == Scheme::Bem {
        let limit = problem.max_implicit_dt();
        if config.dt >= limit {
            return Err(SimError::InvalidConfig(format!(
                "implicit step needs dt < 1/|Kbar| = {limit}, got {}",
                config.dt
            )));
        }
    }
    let issues = theorem_conformance(problem, config.scheme, config.dt);
    if issues.is_empty() {
        return Ok(());
    }
    let joined = issues.iter().map(|i| i.0.as_str()).collect::<Vec<_>>().join("; ");
    if config.strict {
        return Err(SimError::Conformance(joined));
    }
    log::warn!("{}: {joined}", problem.label());
    Ok(())
}

/// Runs the ensemble on the current rayon pool.
pub fn simulate_ensemble(problem: &SdeProblem, config: &SimConfig) -> Result<MomentSeries, SimError> {
    config.validate(problem.dimension())?;
    check_hypotheses(problem, config)?;

    let blocks = config.num_paths.div_ceil(BLOCK_SIZE);
    let results: Vec<BlockResult> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_SIZE;
            let end = (start + BLOCK_SIZE).min(config.num_paths);
            simulate_block(problem, config, start..end)
        })
        .collect();
    let total = pairwise(results);

    let failed = total.failures.len() as u64;
    if failed as f64 > MAX_FAILURE_FRACTION * config.num_paths as f64 {
        return Err(SimError::TooManyFailures {
            failed,
            total: config.num_paths,
            first: total.failures[0].clone(),
        });
    }
    for f in &total.failures {
        log::warn!("path {} failed at step {}: {}", f.path_id, f.step, f.message);
    }

    let checkpoints = config
        .checkpoints
        .iter()
        .zip(&total.accums)
        .map(|(&k, a)| {
            let (mean_square, std_error) = match a.n {
                0 => (f64::NAN, f64::NAN),
                1 => (a.mean, 0.0),
                n => (a.mean, (a.m2 / (n - 1) as f64 / n as f64).sqrt()),
            };
            CheckpointStats {
                k,
                t: k as f64 * config.dt,
                mean_square,
                std_error,
                surviving: a.n,
                blown_up: a.blown,
                capped_mean_abs: (a.abs_sum + a.blown as f64 * config.blow_up_cap) / config.num_paths as f64,
            }
        })
        .collect();

    Ok(MomentSeries {
        problem: problem.label().to_string(),
        scheme: config.scheme,
        config: config.clone(),
        checkpoints,
        failures: total.failures,
    })
}

/// Runs the ensemble on a dedicated pool of `threads` workers.
pub fn simulate_ensemble_with_threads(
    problem: &SdeProblem,
    config: &SimConfig,
    threads: usize,
) -> Result<MomentSeries, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::ThreadPool(e.to_string()))?;
    pool.install(|| simulate_ensemble(problem, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, exact_linear_mean_square, SdeProblem, StabilityConstants};

    #[test]
    fn checkpoint_grid() {
        let cps = geometric_checkpoints(100_000, 50);
        assert_eq!(cps[0], 0);
        assert_eq!(cps[1], 1);
        assert_eq!(*cps.last().unwrap(), 100_000);
        assert!(cps.windows(2).all(|w| w[0] < w[1]));
        assert!(cps.len() > 40 && cps.len() <= 51);
        assert_eq!(geometric_checkpoints(3, 50), vec![0, 1, 2, 3]);
    }

    #[test]
    fn config_validation() {
        let p = builtin("linear").unwrap();
        let ok = SimConfig::new(Scheme::Em, 0.1, 10, 10, 1, vec![1.0]);
        assert!(ok.validate(1).is_ok());
        let cases = [
            SimConfig { dt: 0.0, ..ok.clone() },
            SimConfig { num_paths: 0, ..ok.clone() },
            SimConfig { initial_value: vec![1.0, 2.0], ..ok.clone() },
            ok.clone().with_checkpoints(vec![0, 5, 5]),
            ok.clone().with_checkpoints(vec![0, 11]),
            ok.clone().with_blow_up_cap(-1.0),
        ];
        for c in cases {
            assert!(matches!(simulate_ensemble(&p, &c), Err(SimError::InvalidConfig(_))), "{c:?}");
        }
    }

    #[test]
    fn strict_mode_rejects_large_steps() {
        let p = builtin("linear").unwrap();
        let cfg = SimConfig::new(Scheme::Em, 0.5, 10, 4, 1, vec![1.0]);
        assert!(simulate_ensemble(&p, &cfg).is_ok());
        assert!(matches!(
            simulate_ensemble(&p, &cfg.with_strict(true)),
            Err(SimError::Conformance(_))
        ));
    }

    #[test]
    fn deterministic_zero_noise_path() {
        let p = SdeProblem::scalar(
            "ode",
            |x, t| -x / (1.0 + t),
            |_, _| 0.0,
            StabilityConstants { k1: 1.0, c: 1.0, kbar: -1.0 },
        )
        .unwrap();
        let cfg = SimConfig::new(Scheme::Em, 0.1, 20, 3, 5, vec![2.0]);
        let s = simulate_ensemble(&p, &cfg).unwrap();
        let mut y = 2.0f64;
        for k in 0..20 {
            y += -y / (1.0 + k as f64 * 0.1) * 0.1;
        }
        let last = s.final_checkpoint();
        assert_eq!(last.surviving, 3);
        assert!((last.mean_square - y * y).abs() < 1e-14);
        assert_eq!(last.std_error, 0.0);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let p = builtin("linear").unwrap();
        let cfg = SimConfig::new(Scheme::Em, 0.1, 200, 1000, 77, vec![1.0]);
        let a = simulate_ensemble_with_threads(&p, &cfg, 1).unwrap();
        let b = simulate_ensemble_with_threads(&p, &cfg, 3).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }

    #[test]
    fn blow_ups_are_frozen_and_counted() {
        let p = builtin("counterexample").unwrap();
        let cfg = SimConfig::new(Scheme::Em, 0.1, 50, 500, 3, vec![4.2]);
        let s = simulate_ensemble(&p, &cfg).unwrap();
        let last = s.final_checkpoint();
        assert!(last.blown_up > 0);
        assert_eq!(last.blown_up + last.surviving, 500);
        assert!(s.checkpoints.windows(2).all(|w| w[0].blown_up <= w[1].blown_up));
        assert!(last.is_lower_bound());
    }

    #[test]
    fn linear_em_tracks_closed_form() {
        let p = builtin("linear").unwrap();
        let cfg = SimConfig::new(Scheme::Em, 0.01, 500, 4000, 11, vec![1.0]);
        let s = simulate_ensemble(&p, &cfg).unwrap();
        let last = s.final_checkpoint();
        let exact = exact_linear_mean_square(1.0, last.t);
        assert!((last.mean_square - exact).abs() < 5.0 * last.std_error + 0.01 * exact);
    }
}
