//! SDE problems `dx = f(x,t) dt + g(x,t) dB` driven by a scalar Brownian motion.
//!
//! A problem carries its drift and diffusion as black-box vector fields plus
//! the constants that enter the stability hypotheses:
//!
//! - `k1`: decay constant, `⟨x, f(x,t)⟩ ≤ −k1 (1+t)^{-1} |x|²` and
//!   `|f(x,t)| ≤ k1 (1+t)^{-1} |x|`,
//! - `c`: diffusion amplitude, `|g(x,t)| ≤ c (1+t)^{-k1}`,
//! - `kbar`: one-sided Lipschitz constant,
//!   `⟨x−y, f(x,t)−f(y,t)⟩ ≤ kbar (1+t)^{-1} |x−y|²`.
//!
//! Local Lipschitz continuity is assumed (existence and uniqueness) and not
//! audited.

mod audit;
mod builtins;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{audit_conditions, AuditGrid, ConditionAuditReport, ConditionMargin, Condition};
pub use builtins::{
    bem_example, builtin, cubic_counterexample, exact_linear_mean_square, linear_example,
    ProblemSpec, BUILTIN_LABELS,
};

/// In-place vector field `(x, t, out)`; `out` has the problem dimension.
pub type VectorField = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("unknown problem label `{0}` (known: linear, counterexample, bem-example)")]
    UnknownLabel(String),
    #[error("{field} returned a non-finite value at x = {x:?}, t = {t}")]
    NonFinite { field: &'static str, x: Vec<f64>, t: f64 },
    #[error("empty sample set: {0}")]
    EmptySamples(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub k1: f64,
    pub c: f64,
    pub kbar: f64,
}

#[derive(Clone)]
pub struct SdeProblem {
    label: String,
    dimension: usize,
    drift: VectorField,
    diffusion: VectorField,
    constants: StabilityConstants,
    satisfies_linear_growth: bool,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("label", &self.label)
            .field("dimension", &self.dimension)
            .field("constants", &self.constants)
            .field("satisfies_linear_growth", &self.satisfies_linear_growth)
            .finish_non_exhaustive()
    }
}

impl SdeProblem {
    pub fn new(
        label: impl Into<String>,
        dimension: usize,
        drift: VectorField,
        diffusion: VectorField,
        constants: StabilityConstants,
    ) -> Result<Self, ModelError> {
        if dimension == 0 {
            return Err(ModelError::Invalid("dimension must be positive".into()));
        }
        check_constants(&constants)?;
        Ok(Self {
            label: label.into(),
            dimension,
            drift,
            diffusion,
            constants,
            satisfies_linear_growth: true,
        })
    }

    /// Scalar problem from plain `f(x, t)` and `g(x, t)`.
    pub fn scalar<F, G>(
        label: impl Into<String>,
        drift: F,
        diffusion: G,
        constants: StabilityConstants,
    ) -> Result<Self, ModelError>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            label,
            1,
            Arc::new(move |x: &[f64], t: f64, out: &mut [f64]| out[0] = drift(x[0], t)),
            Arc::new(move |x: &[f64], t: f64, out: &mut [f64]| out[0] = diffusion(x[0], t)),
            constants,
        )
    }

    /// Marks whether `|f(x,t)| ≤ k1 (1+t)^{-1}|x|` is claimed for this problem.
    pub fn with_linear_growth(mut self, holds: bool) -> Self {
        self.satisfies_linear_growth = holds;
        self
    }

    /// Replaces the stability constants; the vector fields are unchanged.
    pub fn with_constants(mut self, constants: StabilityConstants) -> Result<Self, ModelError> {
        check_constants(&constants)?;
        self.constants = constants;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn constants(&self) -> StabilityConstants {
        self.constants
    }

    pub fn k1(&self) -> f64 {
        self.constants.k1
    }

    pub fn c(&self) -> f64 {
        self.constants.c
    }

    pub fn kbar(&self) -> f64 {
        self.constants.kbar
    }

    pub fn satisfies_linear_growth(&self) -> bool {
        self.satisfies_linear_growth
    }

    /// Largest step for which `x = f(x,t)Δt + b` is guaranteed a unique root:
    /// `1/|kbar|`, infinite when `kbar = 0`.
    pub fn max_implicit_dt(&self) -> f64 {
        1.0 / self.constants.kbar.abs()
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.drift)(x, t, out)
    }

    #[inline]
    pub fn diffusion_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.diffusion)(x, t, out)
    }

    pub fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.drift_into(x, t, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.diffusion_into(x, t, &mut out);
        out
    }
}

fn check_constants(c: &StabilityConstants) -> Result<(), ModelError> {
    if !(c.k1.is_finite() && c.k1 > 0.0) {
        return Err(ModelError::Invalid(format!("K1 = {} must be positive", c.k1)));
    }
    if !(c.c.is_finite() && c.c > 0.0) {
        return Err(ModelError::Invalid(format!("C = {} must be positive", c.c)));
    }
    if !c.kbar.is_finite() {
        return Err(ModelError::Invalid(format!("Kbar = {} must be finite", c.kbar)));
    }
    Ok(())
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
