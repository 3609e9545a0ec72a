//! One-step maps.
//!
//! Explicit Euler–Maruyama:
//!
//! ```text
//! Y_{k+1} = Y_k + f(Y_k, kΔt)Δt + g(Y_k, kΔt)ΔB_k
//! ```
//!
//! Backward (drift-implicit) Euler–Maruyama:
//!
//! ```text
//! Z_{k+1} = Z_k + f(Z_{k+1}, (k+1)Δt)Δt + g(Z_k, kΔt)ΔB_k
//! ```
//!
//! Both are fixed-step with no safeguards; the explicit map is applied exactly
//! as written even where it is known to diverge.

mod implicit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SdeProblem;

pub use implicit::{
    bisection_solve, newton_solve, solve_implicit, Fallback, ImplicitSolution,
    ImplicitSolverConfig, SolveMethod,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("invalid step context: {0}")]
    InvalidContext(String),
    #[error("state has dimension {got}, problem has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{field} is non-finite at state {state:?}, t = {t}")]
    NonFinite { field: &'static str, state: Vec<f64>, t: f64 },
    #[error("dt = {dt} violates dt < 1/|Kbar| = {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("implicit solve did not converge after {iterations} iterations (best residual {best_residual:e} at {state:?})")]
    NotConverged { iterations: usize, best_residual: f64, state: Vec<f64> },
    #[error("bisection fallback needs a scalar problem (dimension {0})")]
    BisectionNotScalar(usize),
}

/// Discretisation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Em,
    Bem,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Em => "em",
            Scheme::Bem => "bem",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Scheme::Em),
            "bem" => Ok(Scheme::Bem),
            other => Err(format!("unknown scheme `{other}` (expected em or bem)")),
        }
    }
}

/// Step index, step size and Brownian increment `ΔB_k = B((k+1)Δt) − B(kΔt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub k: u64,
    pub dt: f64,
    pub db: f64,
}

impl StepContext {
    pub fn new(k: u64, dt: f64, db: f64) -> Result<Self, StepError> {
        let ctx = Self { k, dt, db };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(StepError::InvalidContext(format!("dt = {} must be positive", self.dt)));
        }
        if !self.db.is_finite() {
            return Err(StepError::InvalidContext(format!("dB = {} is not finite", self.db)));
        }
        Ok(())
    }

    /// `kΔt`
    pub fn t(&self) -> f64 {
        self.k as f64 * self.dt
    }

    /// `(k+1)Δt`
    pub fn t_next(&self) -> f64 {
        (self.k + 1) as f64 * self.dt
    }
}

/// Reusable buffers for the in-place steppers.
#[derive(Debug, Clone)]
pub struct StepWorkspace {
    pub(crate) f: Vec<f64>,
    pub(crate) g: Vec<f64>,
    pub(crate) solver: implicit::SolverWorkspace,
}

impl StepWorkspace {
    pub fn new(dimension: usize) -> Self {
        Self {
            f: vec![0.0; dimension],
            g: vec![0.0; dimension],
            solver: implicit::SolverWorkspace::new(dimension),
        }
    }
}

fn check_dimension(problem: &SdeProblem, len: usize) -> Result<(), StepError> {
    if len == problem.dimension() {
        Ok(())
    } else {
        Err(StepError::DimensionMismatch { expected: problem.dimension(), got: len })
    }
}

fn check_finite(field: &'static str, v: &[f64], state: &[f64], t: f64) -> Result<(), StepError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StepError::NonFinite { field, state: state.to_vec(), t })
    }
}

/// One explicit Euler–Maruyama step.
pub fn em_step(problem: &SdeProblem, y: &[f64], ctx: StepContext) -> Result<Vec<f64>, StepError> {
    ctx.validate()?;
    check_dimension(problem, y.len())?;
    let mut out = y.to_vec();
    em_step_in_place(problem, &mut out, ctx, &mut StepWorkspace::new(y.len()))?;
    Ok(out)
}

pub(crate) fn em_step_in_place(
    problem: &SdeProblem,
    y: &mut [f64],
    ctx: StepContext,
    ws: &mut StepWorkspace,
) -> Result<(), StepError> {
    let t = ctx.t();
    problem.drift_into(y, t, &mut ws.f);
    check_finite("drift", &ws.f, y, t)?;
    problem.diffusion_into(y, t, &mut ws.g);
    check_finite("diffusion", &ws.g, y, t)?;
    for ((yi, fi), gi) in y.iter_mut().zip(&ws.f).zip(&ws.g) {
        *yi += fi * ctx.dt + gi * ctx.db;
    }
    Ok(())
}

/// One backward Euler–Maruyama step: solves
/// `x = f(x, (k+1)Δt)Δt + z + g(z, kΔt)ΔB_k`.
pub fn bem_step(
    problem: &SdeProblem,
    z: &[f64],
    ctx: StepContext,
    cfg: &ImplicitSolverConfig,
) -> Result<Vec<f64>, StepError> {
    ctx.validate()?;
    check_dimension(problem, z.len())?;
    let mut out = z.to_vec();
    bem_step_in_place(problem, &mut out, ctx, cfg, &mut StepWorkspace::new(z.len()))?;
    Ok(out)
}

pub(crate) fn bem_step_in_place(
    problem: &SdeProblem,
    z: &mut [f64],
    ctx: StepContext,
    cfg: &ImplicitSolverConfig,
    ws: &mut StepWorkspace,
) -> Result<(), StepError> {
    let t = ctx.t();
    problem.diffusion_into(z, t, &mut ws.g);
    check_finite("diffusion", &ws.g, z, t)?;
    for (zi, gi) in z.iter_mut().zip(&ws.g) {
        *zi += gi * ctx.db;
    }
    implicit::solve_in_place(problem, ctx.t_next(), z, ctx.dt, cfg, &mut ws.solver)
}

/// A hypothesis of the stability theorems that the chosen `dt` or problem
/// constants do not meet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceIssue(pub String);

impl std::fmt::Display for ConformanceIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks the step-size and constant hypotheses under which the scheme is
/// guaranteed to keep the polynomial mean-square decay.
///
/// EM: linear growth, `K1 ≥ 1`, `Δt < 1/(2+K1)`.
/// BEM: `K1 > 0.5`, `Δt < min(1/|Kbar|, 1/K1)`.
pub fn theorem_conformance(problem: &SdeProblem, scheme: Scheme, dt: f64) -> Vec<ConformanceIssue> {
    let k1 = problem.k1();
    let mut issues = Vec::new();
    match scheme {
        Scheme::Em => {
            if !problem.satisfies_linear_growth() {
                issues.push(ConformanceIssue(format!(
                    "problem `{}` does not satisfy the linear growth bound required by EM",
                    problem.label()
                )));
            }
            if k1 < 1.0 {
                issues.push(ConformanceIssue(format!("EM requires K1 >= 1, got {k1}")));
            }
            if dt >= 1.0 / (2.0 + k1) {
                issues.push(ConformanceIssue(format!(
                    "EM requires dt < 1/(2+K1) = {}, got {dt}",
                    1.0 / (2.0 + k1)
                )));
            }
        }
        Scheme::Bem => {
            if k1 <= 0.5 {
                issues.push(ConformanceIssue(format!("BEM requires K1 > 0.5, got {k1}")));
            }
            let limit = problem.max_implicit_dt().min(1.0 / k1);
            if dt >= limit {
                issues.push(ConformanceIssue(format!(
                    "BEM requires dt < min(1/|Kbar|, 1/K1) = {limit}, got {dt}"
                )));
            }
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        bem_example, cubic_counterexample, linear_example, StabilityConstants,
    };

    fn zero_problem() -> SdeProblem {
        SdeProblem::scalar(
            "zero",
            |_, _| 0.0,
            |_, _| 0.0,
            StabilityConstants { k1: 1.0, c: 1.0, kbar: 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn em_examples() {
        let lin = linear_example();
        let ctx = StepContext::new(0, 0.1, 0.0).unwrap();
        assert_eq!(em_step(&lin, &[1.0], ctx).unwrap(), vec![0.9]);
        let ctx = StepContext::new(0, 0.1, 0.5).unwrap();
        assert_eq!(em_step(&lin, &[0.0], ctx).unwrap(), vec![0.5]);
        let ctx = StepContext::new(7, 0.1, 0.5).unwrap();
        let y = em_step(&lin, &[0.0], ctx).unwrap()[0];
        assert!((y - 0.5 / 1.7).abs() < 1e-15);

        let cubic = cubic_counterexample();
        let ctx = StepContext::new(0, 0.1, 0.0).unwrap();
        let y = em_step(&cubic, &[10.0], ctx).unwrap()[0];
        assert!((y - (-93.0)).abs() < 1e-12);
    }

    #[test]
    fn em_consistency_with_drift() {
        let p = bem_example();
        let y = [1.3];
        for dt in [1e-2, 1e-4, 1e-6] {
            let ctx = StepContext::new(4, dt, 0.0).unwrap();
            let next = em_step(&p, &y, ctx).unwrap()[0];
            let f = p.drift(&y, 4.0 * dt)[0];
            assert!(((next - y[0]) / dt - f).abs() <= 1e-9 * f.abs().max(1.0) / dt.sqrt());
        }
    }

    #[test]
    fn bem_examples() {
        let cfg = ImplicitSolverConfig::default();
        let zero = zero_problem();
        let ctx = StepContext::new(3, 0.2, 0.7).unwrap();
        assert_eq!(bem_step(&zero, &[2.5], ctx, &cfg).unwrap(), vec![2.5]);

        let lin = linear_example();
        let ctx = StepContext::new(0, 0.1, 0.0).unwrap();
        let z = bem_step(&lin, &[1.0], ctx, &cfg).unwrap()[0];
        assert!((z - 11.0 / 12.0).abs() < 1e-14);

        // 50-digit bisection reference of x + 0.3(3x + x³)/1.69 = 2 + 0.5 sin 2
        let p = bem_example();
        let ctx = StepContext::new(0, 0.3, 0.1).unwrap();
        let z = bem_step(&p, &[2.0], ctx, &cfg).unwrap()[0];
        assert!((z - 1.329_489_459_304_836).abs() < 1e-13, "{z}");
    }

    #[test]
    fn invalid_contexts() {
        assert!(StepContext::new(0, 0.0, 0.0).is_err());
        assert!(StepContext::new(0, 0.1, f64::NAN).is_err());
        let lin = linear_example();
        let ctx = StepContext { k: 0, dt: -1.0, db: 0.0 };
        assert!(em_step(&lin, &[1.0], ctx).is_err());
        let ctx = StepContext::new(0, 0.1, 0.0).unwrap();
        assert!(matches!(
            em_step(&lin, &[1.0, 2.0], ctx),
            Err(StepError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_drift_is_an_error() {
        let p = SdeProblem::scalar(
            "blowup",
            |x, _| x.powi(400),
            |_, _| 0.0,
            StabilityConstants { k1: 1.0, c: 1.0, kbar: 0.0 },
        )
        .unwrap();
        let ctx = StepContext::new(0, 0.1, 0.0).unwrap();
        assert!(matches!(em_step(&p, &[1e3], ctx), Err(StepError::NonFinite { .. })));
    }

    #[test]
    fn conformance_checks() {
        assert!(theorem_conformance(&linear_example(), Scheme::Em, 0.1).is_empty());
        assert_eq!(theorem_conformance(&linear_example(), Scheme::Em, 0.4).len(), 1);
        assert!(!theorem_conformance(&cubic_counterexample(), Scheme::Em, 0.1).is_empty());
        assert!(theorem_conformance(&bem_example(), Scheme::Bem, 0.3).is_empty());
        assert_eq!(theorem_conformance(&bem_example(), Scheme::Bem, 0.34).len(), 1);
        assert_eq!("BEM".parse::<Scheme>().unwrap(), Scheme::Bem);
        assert!("rk4".parse::<Scheme>().is_err());
    }
}
