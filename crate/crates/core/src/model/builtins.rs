use serde::{Deserialize, Serialize};

use super::{ModelError, SdeProblem, StabilityConstants};

pub const BUILTIN_LABELS: [&str; 3] = ["linear", "counterexample", "bem-example"];

/// `dx = −x/(1+t) dt + 1/(1+t) dB`, with `K1 = 1`, `C = 1`, `Kbar = −1`.
pub fn linear_example() -> SdeProblem {
    SdeProblem::scalar(
        "linear",
        |x, t| -x / (1.0 + t),
        |_, t| 1.0 / (1.0 + t),
        StabilityConstants { k1: 1.0, c: 1.0, kbar: -1.0 },
    )
    .expect("valid constants")
}

/// `dx = (−3x − x³)/(1+t) dt + (1+t)^{-3} dB`, with `K1 = 3`, `C = 1`.
///
/// The drift is superlinear, so the linear-growth bound fails and explicit
/// Euler–Maruyama diverges from large states. `Kbar = −3` since
/// `(x³ − y³)(x − y) ≥ 0`.
pub fn cubic_counterexample() -> SdeProblem {
    SdeProblem::scalar(
        "counterexample",
        |x, t| (-3.0 * x - x * x * x) / (1.0 + t),
        |_, t| {
            let s = 1.0 + t;
            1.0 / (s * s * s)
        },
        StabilityConstants { k1: 3.0, c: 1.0, kbar: -3.0 },
    )
    .expect("valid constants")
    .with_linear_growth(false)
}

/// `dx = (−3x − x³)/(1+t)² dt + 5 sin(x)/(1+t)⁴ dB`, shipped with the claimed
/// constants `K1 = 3`, `C = 5`.
///
/// The drift decays like `(1+t)^{-2}`, so the one-sided decay bound with
/// `K1 = 3` only holds at `t = 0`; [`super::audit_conditions`] reports it.
/// `Kbar = 0` is the smallest constant valid for every `t > 0`.
pub fn bem_example() -> SdeProblem {
    SdeProblem::scalar(
        "bem-example",
        |x, t| {
            let s = 1.0 + t;
            (-3.0 * x - x * x * x) / (s * s)
        },
        |x, t| {
            let s2 = (1.0 + t) * (1.0 + t);
            5.0 * x.sin() / (s2 * s2)
        },
        StabilityConstants { k1: 3.0, c: 5.0, kbar: 0.0 },
    )
    .expect("valid constants")
    .with_linear_growth(false)
}

/// Builtin problem by label.
pub fn builtin(label: &str) -> Result<SdeProblem, ModelError> {
    match label {
        "linear" => Ok(linear_example()),
        "counterexample" | "cubic" => Ok(cubic_counterexample()),
        "bem-example" | "bem" => Ok(bem_example()),
        other => Err(ModelError::UnknownLabel(other.to_string())),
    }
}

/// Closed-form `E|x(t)|²` for the linear example: `x(t) = (x0 + B(t))/(1+t)`.
pub fn exact_linear_mean_square(x0: f64, t: f64) -> f64 {
    let s = 1.0 + t;
    (x0 * x0 + t) / (s * s)
}

/// A builtin problem with optional overrides, as read from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_value: Option<Vec<f64>>,
}

impl ProblemSpec {
    pub fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), k1: None, c: None, initial_value: None }
    }

    pub fn build(&self) -> Result<SdeProblem, ModelError> {
        let problem = builtin(&self.label)?;
        let mut constants = problem.constants();
        if let Some(k1) = self.k1 {
            constants.k1 = k1;
        }
        if let Some(c) = self.c {
            constants.c = c;
        }
        problem.with_constants(constants)
    }

    /// The override if present, else the builtin's default starting point.
    pub fn initial_value(&self) -> Result<Vec<f64>, ModelError> {
        if let Some(v) = &self.initial_value {
            if v.len() != 1 || !v.iter().all(|x| x.is_finite()) {
                return Err(ModelError::Invalid(format!(
                    "initial value {v:?} must be one finite component"
                )));
            }
            return Ok(v.clone());
        }
        default_initial_value(&self.label)
    }
}

fn default_initial_value(label: &str) -> Result<Vec<f64>, ModelError> {
    match label {
        "linear" | "bem-example" | "bem" => Ok(vec![1.0]),
        // from 4.2 roughly half of the explicit paths diverge within a few steps
        "counterexample" | "cubic" => Ok(vec![4.2]),
        other => Err(ModelError::UnknownLabel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(p: &SdeProblem, x: f64, t: f64) -> f64 {
        p.drift(&[x], t)[0]
    }

    fn g(p: &SdeProblem, x: f64, t: f64) -> f64 {
        p.diffusion(&[x], t)[0]
    }

    #[test]
    fn linear_coefficients() {
        let p = linear_example();
        assert_eq!(f(&p, 2.0, 0.0), -2.0);
        assert_eq!(f(&p, 3.0, 2.0), -1.0);
        assert_eq!(g(&p, 5.0, 9.0), 0.1);
        assert!(p.satisfies_linear_growth());
    }

    #[test]
    fn cubic_coefficients() {
        let p = cubic_counterexample();
        assert_eq!(f(&p, 1.0, 0.0), -4.0);
        assert_eq!(f(&p, 2.0, 1.0), -7.0);
        assert_eq!(g(&p, 0.0, 0.0), 1.0);
        assert!(!p.satisfies_linear_growth());
        assert_eq!(p.k1(), 3.0);
    }

    #[test]
    fn bem_coefficients() {
        let p = bem_example();
        assert_eq!(f(&p, 1.0, 0.0), -4.0);
        for t in [0.0, 0.3, 7.0, 1e3] {
            assert_eq!(g(&p, 0.0, t), 0.0);
        }
        assert_eq!(g(&p, std::f64::consts::FRAC_PI_2, 0.0), 5.0);
        assert_eq!((p.k1(), p.c()), (3.0, 5.0));
    }

    #[test]
    fn exact_mean_square() {
        assert_eq!(exact_linear_mean_square(1.0, 0.0), 1.0);
        assert_eq!(exact_linear_mean_square(0.0, 3.0), 3.0 / 16.0);
        assert!((exact_linear_mean_square(2.0, 99.0) - 0.0103).abs() < 1e-16);
    }

    #[test]
    fn exact_mean_square_slope_tends_to_minus_one() {
        let slope = |t: f64| {
            let h = 1e-3;
            let (a, b) = (t * (1.0 - h), t * (1.0 + h));
            (exact_linear_mean_square(3.0, b).ln() - exact_linear_mean_square(3.0, a).ln())
                / ((1.0 + b).ln() - (1.0 + a).ln())
        };
        assert!((slope(1e8) + 1.0).abs() < 1e-6);
        assert!((slope(1e2) + 1.0).abs() > (slope(1e4) + 1.0).abs());
    }

    #[test]
    fn spec_overrides() {
        let spec: ProblemSpec =
            serde_json::from_str(r#"{"label":"linear","k1":0.8,"initial_value":[2.5]}"#).unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.k1(), 0.8);
        assert_eq!(p.c(), 1.0);
        assert_eq!(spec.initial_value().unwrap(), vec![2.5]);
        assert_eq!(ProblemSpec::new("counterexample").initial_value().unwrap(), vec![4.2]);
        assert!(matches!(ProblemSpec::new("nope").build(), Err(ModelError::UnknownLabel(_))));
        let bad = ProblemSpec { k1: Some(-1.0), ..ProblemSpec::new("linear") };
        assert!(bad.build().is_err());
        assert!(serde_json::from_str::<ProblemSpec>(r#"{"label":"linear","K":1}"#).is_err());
    }
}
