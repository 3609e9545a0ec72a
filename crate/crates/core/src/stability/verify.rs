//! Grid verification of the gamma kernel and the proof-chain bounds.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use super::bounds::{self, Stages};
use crate::gamma::{
    log_gamma, product_direct, product_via_gamma, ratio_power_margin, GammaError,
    GammaProductParams,
};

const MAX_LISTED: usize = 20;

/// Collects margins for one check; a point fails when its margin is below
/// `−slack` (or not positive, for strict checks).
pub struct Recorder {
    slack: f64,
    strict: bool,
    negate: bool,
    outcome: CheckOutcome,
}

impl Recorder {
    pub fn record(&mut self, margin: f64, point: impl FnOnce() -> String) {
        let margin = if self.negate { -margin } else { margin };
        let o = &mut self.outcome;
        o.evaluated += 1;
        let failed = margin.is_nan() || margin < -self.slack || (self.strict && margin <= 0.0);
        let is_worst = margin < o.worst_margin || margin.is_nan();
        if failed || is_worst {
            let label = point();
            if failed {
                o.violation_count += 1;
                if o.violations.len() < MAX_LISTED {
                    o.violations.push(format!("{label}: margin {margin:e}"));
                }
            }
            if is_worst && !o.worst_margin.is_nan() {
                o.worst_margin = margin;
                o.worst_point = label;
            }
        }
    }

    pub fn record_stages(&mut self, stages: &Stages, point: impl Fn() -> String) {
        let (stage, margin) = bounds::worst(stages);
        self.record(margin, || format!("{} [{stage}]", point()));
    }

    pub fn error(&mut self, err: GammaError, point: impl FnOnce() -> String) {
        self.record(f64::NAN, || format!("{} (error: {err})", point()));
    }
}

type CheckFn = dyn Fn(&mut Recorder) + Send + Sync;

pub struct Check {
    pub name: String,
    pub slack: f64,
    pub strict: bool,
    run: Box<CheckFn>,
}

impl Check {
    pub fn new(name: impl Into<String>, slack: f64, run: impl Fn(&mut Recorder) + Send + Sync + 'static) -> Self {
        Self { name: name.into(), slack, strict: false, run: Box::new(run) }
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn run(&self, negate: bool) -> CheckOutcome {
        let mut rec = Recorder {
            slack: self.slack,
            strict: self.strict,
            negate,
            outcome: CheckOutcome {
                name: self.name.clone(),
                evaluated: 0,
                worst_margin: f64::INFINITY,
                worst_point: String::new(),
                violation_count: 0,
                violations: Vec::new(),
            },
        };
        (self.run)(&mut rec);
        rec.outcome
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub evaluated: u64,
    pub worst_margin: f64,
    pub worst_point: String,
    pub violation_count: u64,
    /// The first few failing points.
    pub violations: Vec<String>,
}

impl CheckOutcome {
    pub fn pass(&self) -> bool {
        self.violation_count == 0 && self.evaluated > 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(CheckOutcome::pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyGrid {
    pub k_max: u64,
    pub dts: Vec<f64>,
    pub em_k1s: Vec<f64>,
    pub bem_k1s: Vec<f64>,
    /// Random parameter sets for the product identity.
    pub identity_samples: usize,
    pub identity_max_len: u64,
    pub seed: u64,
    pub slack: f64,
}

impl Default for VerifyGrid {
    fn default() -> Self {
        Self {
            k_max: 200,
            dts: vec![0.05, 0.1, 0.2],
            em_k1s: vec![1.0, 1.5, 2.0, 2.7, 3.0],
            bem_k1s: vec![0.6, 0.75, 1.0, 1.5, 2.0, 2.7, 3.0],
            identity_samples: 1000,
            identity_max_len: 10_000,
            seed: 20_240_601,
            slack: 1e-12,
        }
    }
}

pub const SIGN_GRID_X: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e4];
pub const SIGN_GRID_ETA: [f64; 10] = [0.1, 0.25, 0.5, 0.75, 0.9, 1.1, 1.5, 2.0, 3.7, 5.0];
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const RECURRENCE_TOLERANCE: f64 = 1e-12;

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Random `GammaProductParams` with `0 ≤ a ≤ b ≤ max_len`, `α ∈ (0,5]`,
/// `β ∈ [0,10]`, `δ ∈ (0, 0.99/α)`.
pub fn random_product_params(rng: &mut ChaCha8Rng, max_len: u64) -> GammaProductParams {
    let a = rng.next_u64() % (max_len + 1);
    let b = a + rng.next_u64() % (max_len - a + 1);
    let alpha = 5.0 * (1.0 - uniform(rng));
    let beta = 10.0 * uniform(rng);
    let delta = 0.99 / alpha * (1.0 - uniform(rng));
    GammaProductParams { a, b, alpha, beta, delta }
}

fn identity_check(grid: &VerifyGrid) -> Check {
    let (n, max_len, seed) = (grid.identity_samples, grid.identity_max_len, grid.seed);
    Check::new("product-identity", 0.0, move |rec| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let p = random_product_params(&mut rng, max_len);
            let label = || format!("a={} b={} alpha={} beta={} delta={}", p.a, p.b, p.alpha, p.beta, p.delta);
            match (product_direct(&p), product_via_gamma(&p)) {
                (Ok(d), Ok(g)) => rec.record(IDENTITY_TOLERANCE - ((g - d) / d).abs(), label),
                (Err(e), _) | (_, Err(e)) => rec.error(e, label),
            }
        }
    })
}

fn empty_product_check() -> Check {
    Check::new("empty-product", 0.0, |rec| {
        for (a, alpha, beta, delta) in [(1u64, 2.0, 0.0, 0.1), (7, 0.5, 3.0, 1.5), (500, 4.9, 10.0, 0.2), (1, 1.0, 0.0, 0.999)] {
            let p = GammaProductParams { a, b: a - 1, alpha, beta, delta };
            let label = || format!("a={a} b={} alpha={alpha} beta={beta} delta={delta}", a - 1);
            match (product_direct(&p), product_via_gamma(&p)) {
                (Ok(d), Ok(g)) => rec.record(-((d - 1.0).abs() + (g - 1.0).abs()), label),
                (Err(e), _) | (_, Err(e)) => rec.error(e, label),
            }
        }
    })
}

fn sign_check() -> Check {
    Check::new("ratio-sign", 0.0, |rec| {
        for &x in &SIGN_GRID_X {
            for &eta in &SIGN_GRID_ETA {
                let label = || format!("x={x} eta={eta}");
                match ratio_power_margin(x, eta) {
                    Ok(m) => rec.record(if eta < 1.0 { -m } else { m }, label),
                    Err(e) => rec.error(e, label),
                }
            }
        }
    })
    .strict()
}

fn recurrence_check() -> Check {
    Check::new("log-gamma-recurrence", 0.0, |rec| {
        let n = 2000;
        let (lo, hi) = (0.5f64.ln(), 1e5f64.ln());
        for i in 0..=n {
            let x = (lo + (hi - lo) * i as f64 / n as f64).exp();
            let label = || format!("x={x}");
            match (log_gamma(x + 1.0), log_gamma(x)) {
                (Ok(a), Ok(b)) => {
                    let scale = x.ln().abs().max(a.abs()).max(b.abs()).max(f64::MIN_POSITIVE);
                    rec.record(RECURRENCE_TOLERANCE - (a - b - x.ln()).abs() / scale, label)
                }
                (Err(e), _) | (_, Err(e)) => rec.error(e, label),
            }
        }
    })
}

fn k_r_grid(
    name: &str,
    grid: &VerifyGrid,
    k1s: Vec<f64>,
    eval: fn(u64, u64, f64, f64) -> Result<Stages, GammaError>,
) -> Check {
    let (dts, k_max) = (grid.dts.clone(), grid.k_max);
    Check::new(name, grid.slack, move |rec| {
        for &dt in &dts {
            for &k1 in &k1s {
                for k in 2..=k_max {
                    for r in 0..k {
                        let label = || format!("k={k} r={r} dt={dt} K1={k1}");
                        match eval(k, r, dt, k1) {
                            Ok(s) => rec.record_stages(&s, label),
                            Err(e) => rec.error(e, label),
                        }
                    }
                }
            }
        }
    })
}

fn k_grid(
    name: &str,
    grid: &VerifyGrid,
    k1s: Vec<f64>,
    eval: fn(u64, f64, f64) -> Result<Stages, GammaError>,
) -> Check {
    let (dts, k_max) = (grid.dts.clone(), grid.k_max);
    Check::new(name, grid.slack, move |rec| {
        for &dt in &dts {
            for &k1 in &k1s {
                for k in 2..=k_max {
                    let label = || format!("k={k} dt={dt} K1={k1}");
                    match eval(k, dt, k1) {
                        Ok(s) => rec.record_stages(&s, label),
                        Err(e) => rec.error(e, label),
                    }
                }
            }
        }
    })
}

/// Kernel property grids plus every proof-chain bound.
pub fn default_checks(grid: &VerifyGrid) -> Vec<Check> {
    vec![
        identity_check(grid),
        empty_product_check(),
        sign_check(),
        recurrence_check(),
        k_grid("em-first-term", grid, grid.em_k1s.clone(), bounds::em_first_term),
        k_r_grid("em-second-term", grid, grid.em_k1s.clone(), bounds::em_second_term),
        k_grid("bem-first-term", grid, grid.bem_k1s.clone(), bounds::bem_first_term),
        k_r_grid("bem-second-term", grid, grid.bem_k1s.clone(), bounds::bem_second_term),
        k_grid("em-product-envelope", grid, grid.em_k1s.clone(), bounds::em_product_envelope),
    ]
}

/// Runs `checks`, negating the margins of any check named in `invert`.
pub fn run_checks(checks: &[Check], invert: &[String]) -> VerifyReport {
    let checks = checks
        .par_iter()
        .map(|c| c.run(invert.iter().any(|n| *n == c.name)))
        .collect();
    VerifyReport { checks }
}

pub fn verify_gamma(grid: &VerifyGrid) -> VerifyReport {
    run_checks(&default_checks(grid), &[])
}
