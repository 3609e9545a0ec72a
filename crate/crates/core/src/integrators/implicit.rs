//! Root of `x = f(x,t)Δt + b`.
//!
//! With `Δt < 1/|Kbar|` the map `F(x) = x − f(x,t)Δt` is strongly monotone,
//! `⟨x−y, F(x)−F(y)⟩ ≥ (1 − |Kbar|Δt)|x−y|²`, so the root exists and is
//! unique. Damped Newton with a central-difference Jacobian starts from `b`;
//! if it stalls, the configured fallback takes over.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::StepError;
use crate::model::SdeProblem;

const MAX_HALVINGS: usize = 40;
const MAX_BISECTIONS: usize = 2200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// Bracket grown geometrically from `b`, then bisection. Scalar problems only.
    Bisection,
    /// `x ← x − ω F(x)` with `ω` halved whenever the residual grows.
    DampedIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitSolverConfig {
    /// Absolute tolerance on `|x − f(x,t)Δt − b|`.
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    pub fallback: Fallback,
}

impl Default for ImplicitSolverConfig {
    fn default() -> Self {
        Self { residual_tolerance: 1e-12, max_iterations: 100, fallback: Fallback::Bisection }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    Newton,
    Bisection,
    DampedIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

#[derive(Debug, Clone)]
pub(crate) struct SolverWorkspace {
    x: Vec<f64>,
    trial: Vec<f64>,
    r: Vec<f64>,
    r_trial: Vec<f64>,
    f: Vec<f64>,
    probe: Vec<f64>,
    f_plus: Vec<f64>,
    f_minus: Vec<f64>,
}

impl SolverWorkspace {
    pub(crate) fn new(n: usize) -> Self {
        let v = vec![0.0; n];
        Self {
            x: v.clone(),
            trial: v.clone(),
            r: v.clone(),
            r_trial: v.clone(),
            f: v.clone(),
            probe: v.clone(),
            f_plus: v.clone(),
            f_minus: v,
        }
    }
}

struct Residual<'a> {
    problem: &'a SdeProblem,
    t: f64,
    dt: f64,
    b: &'a [f64],
}

impl Residual<'_> {
    /// Writes `F(x) − b` into `out` and returns its norm; `f` is scratch.
    fn eval(&self, x: &[f64], f: &mut [f64], out: &mut [f64]) -> Result<f64, StepError> {
        self.problem.drift_into(x, self.t, f);
        if !f.iter().all(|v| v.is_finite()) {
            return Err(StepError::NonFinite { field: "drift", state: x.to_vec(), t: self.t });
        }
        let mut sq = 0.0;
        for i in 0..x.len() {
            out[i] = x[i] - f[i] * self.dt - self.b[i];
            sq += out[i] * out[i];
        }
        Ok(sq.sqrt())
    }

    /// Smallest residual representable near `x`: when the terms of `F(x) − b`
    /// are large, an absolute tolerance below their rounding error is unreachable.
    fn floor(&self, x: &[f64], f: &[f64]) -> f64 {
        let scale: f64 = (0..x.len())
            .map(|i| x[i].abs() + (f[i] * self.dt).abs() + self.b[i].abs())
            .sum();
        4.0 * f64::EPSILON * scale
    }

    fn converged(&self, res: f64, x: &[f64], f: &[f64], tol: f64) -> bool {
        res <= tol.max(self.floor(x, f))
    }
}

fn check_inputs(
    problem: &SdeProblem,
    t: f64,
    b: &[f64],
    dt: f64,
    cfg: &ImplicitSolverConfig,
) -> Result<(), StepError> {
    if b.len() != problem.dimension() {
        return Err(StepError::DimensionMismatch { expected: problem.dimension(), got: b.len() });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(StepError::InvalidContext(format!("dt = {dt} must be positive")));
    }
    if !t.is_finite() {
        return Err(StepError::InvalidContext(format!("t = {t} must be finite")));
    }
    if !b.iter().all(|v| v.is_finite()) {
        return Err(StepError::InvalidContext(format!("b = {b:?} must be finite")));
    }
    if !(cfg.residual_tolerance > 0.0) || cfg.max_iterations == 0 {
        return Err(StepError::InvalidContext(
            "solver tolerance and iteration budget must be positive".into(),
        ));
    }
    let limit = problem.max_implicit_dt();
    if dt >= limit {
        return Err(StepError::StepTooLarge { dt, limit });
    }
    Ok(())
}

/// Solves `x = f(x,t)·dt + b`, Newton first, then the configured fallback.
pub fn solve_implicit(
    problem: &SdeProblem,
    t: f64,
    b: &[f64],
    dt: f64,
    cfg: &ImplicitSolverConfig,
) -> Result<Vec<f64>, StepError> {
    check_inputs(problem, t, b, dt, cfg)?;
    let mut x = b.to_vec();
    solve_in_place(problem, t, &mut x, dt, cfg, &mut SolverWorkspace::new(b.len()))?;
    Ok(x)
}

/// `b` in, root out.
pub(crate) fn solve_in_place(
    problem: &SdeProblem,
    t: f64,
    b: &mut [f64],
    dt: f64,
    cfg: &ImplicitSolverConfig,
    ws: &mut SolverWorkspace,
) -> Result<(), StepError> {
    let limit = problem.max_implicit_dt();
    if dt >= limit {
        return Err(StepError::StepTooLarge { dt, limit });
    }
    let rhs = b.to_vec();
    let newton = newton_core(problem, t, &rhs, dt, cfg, ws)?;
    let sol = match newton {
        Ok(sol) => sol,
        Err(stalled) => match cfg.fallback {
            Fallback::Bisection if problem.dimension() == 1 => {
                bisection_core(problem, t, &rhs, dt, cfg)?
            }
            Fallback::Bisection => return Err(stalled),
            Fallback::DampedIteration => damped_core(problem, t, &rhs, dt, cfg, ws)?,
        },
    };
    b.copy_from_slice(&sol.x);
    Ok(())
}

/// Damped Newton alone. Fails with [`StepError::NotConverged`] when it stalls.
pub fn newton_solve(
    problem: &SdeProblem,
    t: f64,
    b: &[f64],
    dt: f64,
    cfg: &ImplicitSolverConfig,
) -> Result<ImplicitSolution, StepError> {
    check_inputs(problem, t, b, dt, cfg)?;
    newton_core(problem, t, b, dt, cfg, &mut SolverWorkspace::new(b.len()))?
}

/// Bracketing bisection alone (scalar problems).
pub fn bisection_solve(
    problem: &SdeProblem,
    t: f64,
    b: &[f64],
    dt: f64,
    cfg: &ImplicitSolverConfig,
) -> Result<ImplicitSolution, StepError> {
    check_inputs(problem, t, b, dt, cfg)?;
    if problem.dimension() != 1 {
        return Err(StepError::BisectionNotScalar(problem.dimension()));
    }
    bisection_core(problem, t, b, dt, cfg)
}

fn not_converged(iterations: usize, best_residual: f64, state: &[f64]) -> StepError {
    StepError::NotConverged { iterations, best_residual, state: state.to_vec() }
}

/// Outer `Err` is a hard failure (non-finite drift); inner `Err` means Newton
/// stalled and a fallback may be tried.
fn newton_core(
    problem: &SdeProblem,
    t: f64,
    b: &[f64],
    dt: f64,
    cfg: &ImplicitSolverConfig,
    ws: &mut SolverWorkspace,
) -> Result<Result<ImplicitSolution, StepError>, StepError> {
    let n = b.len();
    let res = Residual { problem, t, dt, b };
    ws.x.copy_from_slice(b);
    let mut norm = res.eval(&ws.x, &mut ws.f, &mut ws.r)?;
    for iter in 0..cfg.max_iterations {
        if res.converged(norm, &ws.x, &ws.f, cfg.residual_tolerance) {
            return Ok(Ok(ImplicitSolution {
                x: ws.x.clone(),
                residual: norm,
                iterations: iter,
                method: SolveMethod::Newton,
            }));
        }
        let Some(direction) = newton_direction(problem, t, dt, ws)? else {
            return Ok(Err(not_converged(iter, norm, &ws.x)));
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            for i in 0..n {
                ws.trial[i] = ws.x[i] - lambda * direction[i];
            }
            // drift may overflow on an overlong step; treat as a rejected trial
            match res.eval(&ws.trial, &mut ws.f, &mut ws.r_trial) {
                Ok(trial_norm) if trial_norm < norm => {
                    std::mem::swap(&mut ws.x, &mut ws.trial);
                    std::mem::swap(&mut ws.r, &mut ws.r_trial);
                    norm = trial_norm;
                    accepted = true;
                    break;
                }
                _ => lambda *= 0.5,
            }
        }
        if !accepted {
            // restore f for the floor test of the caller
            res.eval(&ws.x, &mut ws.f, &mut ws.r)?;
            if res.converged(norm, &ws.x, &ws.f, cfg.residual_tolerance) {
                break;
            }
            return Ok(Err(not_converged(iter, norm, &ws.x)));
        }
    }
    res.eval(&ws.x, &mut ws.f, &mut ws.r)?;
    if res.converged(norm, &ws.x, &ws.f, cfg.residual_tolerance) {
        Ok(Ok(ImplicitSolution {
            x: ws.x.clone(),
            residual: norm,
            iterations: cfg.max_iterations,
            method: SolveMethod::Newton,
        }))
    } else {
        Ok(Err(not_converged(cfg.max_iterations, norm, &ws.x)))
    }
}

fn fd_step(x: f64) -> f64 {
    1e-7f64.max(1e-7 * x.abs())
}

/// Solves `J δ = r` with `J = I − Δt ∂f/∂x` from central differences.
/// `None` when the Jacobian is singular or non-finite.
fn newton_direction(
    problem: &SdeProblem,
    t: f64,
    dt: f64,
    ws: &mut SolverWorkspace,
) -> Result<Option<Vec<f64>>, StepError> {
    let n = ws.x.len();
    if n == 1 {
        let h = fd_step(ws.x[0]);
        ws.probe[0] = ws.x[0] + h;
        problem.drift_into(&ws.probe, t, &mut ws.f_plus);
        ws.probe[0] = ws.x[0] - h;
        problem.drift_into(&ws.probe, t, &mut ws.f_minus);
        let slope = (ws.f_plus[0] - ws.f_minus[0]) / (2.0 * h);
        let jac = 1.0 - dt * slope;
        let step = ws.r[0] / jac;
        return Ok(step.is_finite().then(|| vec![step]));
    }
    let mut jac = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        let h = fd_step(ws.x[j]);
        ws.probe.copy_from_slice(&ws.x);
        ws.probe[j] = ws.x[j] + h;
        problem.drift_into(&ws.probe, t, &mut ws.f_plus);
        ws.probe[j] = ws.x[j] - h;
        problem.drift_into(&ws.probe, t, &mut ws.f_minus);
        for i in 0..n {
            jac[(i, j)] -= dt * (ws.f_plus[i] - ws.f_minus[i]) / (2.0 * h);
        }
    }
    if !jac.iter().all(|v| v.is_finite()) {
        return Ok(None);
    }
    let rhs = DVector::from_column_slice(&ws.r);
    Ok(jac.lu().solve(&rhs).map(|d| d.as_slice().to_vec()).filter(|d| d.iter().all(|v| v.is_finite())))
}

fn bisection_core(
    problem: &SdeProblem,
    t: f64,
    b: &[f64],
    dt: f64,
    cfg: &ImplicitSolverConfig,
) -> Result<ImplicitSolution, StepError> {
    let res = Residual { problem, t, dt, b };
    let mut f = [0.0];
    let mut r = [0.0];
    // signed F(x) − b, increasing in x
    let mut signed = |x: f64| -> Result<(f64, f64), StepError> {
        res.eval(&[x], &mut f, &mut r)?;
        Ok((r[0], res.floor(&[x], &f)))
    };
    let center = b[0];
    let (g0, floor0) = signed(center)?;
    if g0.abs() <= cfg.residual_tolerance.max(floor0) {
        return Ok(ImplicitSolution {
            x: vec![center],
            residual: g0.abs(),
            iterations: 0,
            method: SolveMethod::Bisection,
        });
    }
    let mut width = center.abs().max(1.0);
    let (mut lo, mut hi) = (center, center);
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > 2000 || !width.is_finite() {
            return Err(not_converged(iterations, g0.abs(), b));
        }
        if g0 > 0.0 {
            lo = center - width;
            if signed(lo)?.0 < 0.0 {
                break;
            }
            hi = lo;
        } else {
            hi = center + width;
            if signed(hi)?.0 > 0.0 {
                break;
            }
            lo = hi;
        }
        width *= 2.0;
    }
    let mut best = (g0.abs(), center);
    for _ in 0..MAX_BISECTIONS {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let (g, floor) = signed(mid)?;
        if g.abs() < best.0 {
            best = (g.abs(), mid);
        }
        if g.abs() <= cfg.residual_tolerance.max(floor) {
            return Ok(ImplicitSolution {
                x: vec![mid],
                residual: g.abs(),
                iterations,
                method: SolveMethod::Bisection,
            });
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(not_converged(iterations, best.0, &[best.1]))
}

fn damped_core(
    problem: &SdeProblem,
    t: f64,
    b: &[f64],
    dt: f64,
    cfg: &ImplicitSolverConfig,
    ws: &mut SolverWorkspace,
) -> Result<ImplicitSolution, StepError> {
    let n = b.len();
    let res = Residual { problem, t, dt, b };
    ws.x.copy_from_slice(b);
    let mut norm = res.eval(&ws.x, &mut ws.f, &mut ws.r)?;
    let mut omega = 1.0;
    let budget = cfg.max_iterations.saturating_mul(50);
    for iter in 0..budget {
        if res.converged(norm, &ws.x, &ws.f, cfg.residual_tolerance) {
            return Ok(ImplicitSolution {
                x: ws.x.clone(),
                residual: norm,
                iterations: iter,
                method: SolveMethod::DampedIteration,
            });
        }
        for i in 0..n {
            ws.trial[i] = ws.x[i] - omega * ws.r[i];
        }
        match res.eval(&ws.trial, &mut ws.f, &mut ws.r_trial) {
            Ok(trial_norm) if trial_norm < norm => {
                std::mem::swap(&mut ws.x, &mut ws.trial);
                std::mem::swap(&mut ws.r, &mut ws.r_trial);
                norm = trial_norm;
            }
            _ => {
                omega *= 0.5;
                if omega < 1e-300 {
                    break;
                }
                res.eval(&ws.x, &mut ws.f, &mut ws.r)?;
            }
        }
    }
    Err(not_converged(budget, norm, &ws.x))
}
