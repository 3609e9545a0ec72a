use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use polystab::ensemble::{geometric_checkpoints, SimConfig, DEFAULT_BLOW_UP_CAP, DEFAULT_CHECKPOINTS};
use polystab::integrators::{ImplicitSolverConfig, Scheme};
use polystab::model::ProblemSpec;
use polystab::stability::DecayOptions;
use serde::{Deserialize, Serialize};

/// One experiment as read from `--spec` or assembled from flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub scheme: Scheme,
    pub dt: f64,
    pub num_steps: u64,
    pub num_paths: u64,
    pub seed: u64,
    /// Explicit checkpoint list; overrides `checkpoint_count`.
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default = "default_checkpoint_count")]
    pub checkpoint_count: usize,
    #[serde(default = "default_cap")]
    pub blow_up_cap: f64,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub solver: ImplicitSolverConfig,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub window_fraction: f64,
    pub tolerance: f64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        let d = DecayOptions::default();
        Self { window_fraction: d.window_fraction, tolerance: d.tolerance }
    }
}

impl From<AnalysisSpec> for DecayOptions {
    fn from(a: AnalysisSpec) -> Self {
        DecayOptions { window_fraction: a.window_fraction, tolerance: a.tolerance }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for `moments.csv`, `config.json`, `report.json` and
    /// `envelope.csv`; CSV goes to stdout when absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Also write the theoretical envelope aligned to the checkpoints.
    #[serde(default)]
    pub envelope: bool,
}

fn default_checkpoint_count() -> usize {
    DEFAULT_CHECKPOINTS
}

fn default_cap() -> f64 {
    DEFAULT_BLOW_UP_CAP
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("invalid experiment spec")
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        if self.checkpoint_count < 2 {
            bail!("checkpoint_count must be at least 2");
        }
        let x0 = self.problem.initial_value()?;
        let checkpoints = match &self.checkpoints {
            Some(c) => c.clone(),
            None => geometric_checkpoints(self.num_steps, self.checkpoint_count),
        };
        let mut cfg = SimConfig::new(self.scheme, self.dt, self.num_steps, self.num_paths, self.seed, x0)
            .with_checkpoints(checkpoints)
            .with_blow_up_cap(self.blow_up_cap)
            .with_strict(self.strict);
        cfg.solver = self.solver;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_uses_defaults() {
        let s = ExperimentSpec::from_json(
            r#"{"problem": {"label": "linear"}, "scheme": "em", "dt": 0.1,
                "num_steps": 1000, "num_paths": 10, "seed": 4}"#,
        )
        .unwrap();
        assert_eq!(s.blow_up_cap, 1e12);
        assert_eq!(s.analysis, AnalysisSpec::default());
        let cfg = s.sim_config().unwrap();
        assert_eq!(cfg.initial_value, vec![1.0]);
        assert_eq!(*cfg.checkpoints.last().unwrap(), 1000);
    }

    #[test]
    fn seed_is_required_and_unknown_fields_rejected() {
        let no_seed = r#"{"problem": {"label": "linear"}, "scheme": "em", "dt": 0.1, "num_steps": 10, "num_paths": 1}"#;
        assert!(ExperimentSpec::from_json(no_seed).is_err());
        let extra = r#"{"problem": {"label": "linear"}, "scheme": "em", "dt": 0.1, "num_steps": 10,
                        "num_paths": 1, "seed": 1, "colour": "red"}"#;
        assert!(ExperimentSpec::from_json(extra).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let s = ExperimentSpec::from_json(
            r#"{"problem": {"label": "bem-example", "k1": 0.9}, "scheme": "bem", "dt": 0.3,
                "num_steps": 100, "num_paths": 5, "seed": 7, "checkpoints": [0, 10, 100],
                "output": {"dir": "out", "envelope": true}}"#,
        )
        .unwrap();
        let back = ExperimentSpec::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(s.sim_config().unwrap().checkpoints, vec![0, 10, 100]);
    }
}
