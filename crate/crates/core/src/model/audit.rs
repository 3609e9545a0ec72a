//! Sampling audit of the growth and monotonicity hypotheses.
//!
//! User problems are black boxes, so the audit evaluates each inequality on
//! a finite grid and reports the worst margin `lhs − rhs`. A pass is evidence
//! on the sampled points only.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use super::{dot, norm, ModelError, SdeProblem};

/// Relative rounding allowance when comparing the two sides of an inequality.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `|f(x,t)| ≤ K1 (1+t)^{-1} |x|`
    LinearGrowth,
    /// `⟨x, f(x,t)⟩ ≤ −K1 (1+t)^{-1} |x|²`
    OneSidedDecay,
    /// `|g(x,t)| ≤ C (1+t)^{-K1}`
    DiffusionDecay,
    /// `⟨x−y, f(x,t)−f(y,t)⟩ ≤ Kbar (1+t)^{-1} |x−y|²`
    OneSidedLipschitz,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::LinearGrowth,
        Condition::OneSidedDecay,
        Condition::DiffusionDecay,
        Condition::OneSidedLipschitz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::LinearGrowth => "linear-growth",
            Condition::OneSidedDecay => "one-sided-decay",
            Condition::DiffusionDecay => "diffusion-decay",
            Condition::OneSidedLipschitz => "one-sided-lipschitz",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionMargin {
    pub condition: Condition,
    /// Largest `lhs − rhs` seen.
    pub worst_margin: f64,
    pub worst_x: Vec<f64>,
    /// Second state of the pair, for the one-sided Lipschitz condition.
    pub worst_y: Option<Vec<f64>>,
    pub worst_t: f64,
    pub samples: usize,
    pub pass: bool,
}

impl ConditionMargin {
    fn new(condition: Condition) -> Self {
        Self {
            condition,
            worst_margin: f64::NEG_INFINITY,
            worst_x: Vec::new(),
            worst_y: None,
            worst_t: 0.0,
            samples: 0,
            pass: true,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, x: &[f64], y: Option<&[f64]>, t: f64) {
        let margin = lhs - rhs;
        self.samples += 1;
        if margin > ROUNDING_SLACK * lhs.abs().max(rhs.abs()) {
            self.pass = false;
        }
        if margin > self.worst_margin {
            self.worst_margin = margin;
            self.worst_x = x.to_vec();
            self.worst_y = y.map(<[f64]>::to_vec);
            self.worst_t = t;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionAuditReport {
    pub problem: String,
    pub margins: Vec<ConditionMargin>,
    /// Largest K1 for which the one-sided decay and diffusion-decay bounds hold
    /// at every sample (with the problem's C); `None` if no positive value does.
    pub k1_supported: Option<f64>,
    pub note: &'static str,
}

impl ConditionAuditReport {
    pub fn margin(&self, condition: Condition) -> &ConditionMargin {
        self.margins
            .iter()
            .find(|m| m.condition == condition)
            .expect("every condition is audited")
    }

    pub fn passes(&self, condition: Condition) -> bool {
        self.margin(condition).pass
    }
}

/// Sample sets for [`audit_conditions`].
#[derive(Debug, Clone)]
pub struct AuditGrid {
    pub states: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// Random state pairs per time for the one-sided Lipschitz check.
    pub pairs_per_time: usize,
    pub seed: u64,
}

impl AuditGrid {
    /// Components in `[-100, 100]` (33 points per axis, at most 3 axes varied)
    /// and `t ∈ {0, 0.1, 1, 10, 100, 1e4}`.
    pub fn default_for(dimension: usize) -> Self {
        Self::box_grid(dimension, -100.0, 100.0, 33, vec![0.0, 0.1, 1.0, 10.0, 100.0, 1e4])
    }

    /// Tensor grid of `points` values per axis over `[lo, hi]`; axes beyond the
    /// third stay at zero.
    pub fn box_grid(dimension: usize, lo: f64, hi: f64, points: usize, times: Vec<f64>) -> Self {
        let axis: Vec<f64> = if points <= 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                .collect()
        };
        let varied = dimension.min(3);
        let mut states = vec![vec![0.0; dimension]];
        for d in 0..varied {
            states = states
                .into_iter()
                .flat_map(|s| {
                    axis.iter().map(move |&v| {
                        let mut s = s.clone();
                        s[d] = v;
                        s
                    })
                })
                .collect();
        }
        Self { states, times, pairs_per_time: 1000, seed: 0x5eed }
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn check_finite(field: &'static str, v: &[f64], x: &[f64], t: f64) -> Result<(), ModelError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { field, x: x.to_vec(), t })
    }
}

/// Evaluates the four hypotheses at every `(state, time)` sample.
pub fn audit_conditions(
    problem: &SdeProblem,
    grid: &AuditGrid,
) -> Result<ConditionAuditReport, ModelError> {
    if grid.states.is_empty() {
        return Err(ModelError::EmptySamples("states"));
    }
    if grid.times.is_empty() {
        return Err(ModelError::EmptySamples("times"));
    }
    let n = problem.dimension();
    if let Some(bad) = grid.states.iter().find(|s| s.len() != n) {
        return Err(ModelError::Invalid(format!(
            "sample state {bad:?} does not have dimension {n}"
        )));
    }
    if let Some(t) = grid.times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(ModelError::Invalid(format!("sample time {t} must be nonnegative")));
    }

    let (k1, c, kbar) = (problem.k1(), problem.c(), problem.kbar());
    let mut growth = ConditionMargin::new(Condition::LinearGrowth);
    let mut decay = ConditionMargin::new(Condition::OneSidedDecay);
    let mut diffusion = ConditionMargin::new(Condition::DiffusionDecay);
    let mut lipschitz = ConditionMargin::new(Condition::OneSidedLipschitz);
    let mut k1_supported = f64::INFINITY;

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    for &t in &grid.times {
        let s = 1.0 + t;
        for x in &grid.states {
            problem.drift_into(x, t, &mut f);
            check_finite("drift", &f, x, t)?;
            problem.diffusion_into(x, t, &mut g);
            check_finite("diffusion", &g, x, t)?;

            let xn = norm(x);
            let xf = dot(x, &f);
            growth.record(norm(&f), k1 / s * xn, x, None, t);
            decay.record(xf, -k1 / s * xn * xn, x, None, t);
            let gn = norm(&g);
            diffusion.record(gn, c * s.powf(-k1), x, None, t);

            if xn > 0.0 {
                k1_supported = k1_supported.min(-xf * s / (xn * xn));
            }
            if gn > c {
                k1_supported = f64::NEG_INFINITY;
            } else if t > 0.0 && gn > 0.0 {
                k1_supported = k1_supported.min((c / gn).ln() / s.ln());
            }
        }
    }

    let (lo, hi) = bounding_box(&grid.states, n);
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut fy = vec![0.0; n];
    let mut diff = vec![0.0; n];
    let mut fdiff = vec![0.0; n];
    for &t in &grid.times {
        let s = 1.0 + t;
        for _ in 0..grid.pairs_per_time {
            for i in 0..n {
                x[i] = lo[i] + (hi[i] - lo[i]) * uniform(&mut rng);
                y[i] = lo[i] + (hi[i] - lo[i]) * uniform(&mut rng);
            }
            problem.drift_into(&x, t, &mut f);
            check_finite("drift", &f, &x, t)?;
            problem.drift_into(&y, t, &mut fy);
            check_finite("drift", &fy, &y, t)?;
            for i in 0..n {
                diff[i] = x[i] - y[i];
                fdiff[i] = f[i] - fy[i];
            }
            let d2 = dot(&diff, &diff);
            lipschitz.record(dot(&diff, &fdiff), kbar / s * d2, &x, Some(&y), t);
        }
    }

    Ok(ConditionAuditReport {
        problem: problem.label().to_string(),
        margins: vec![growth, decay, diffusion, lipschitz],
        k1_supported: (k1_supported > 0.0).then_some(k1_supported),
        note: "sampled evidence only: a pass holds on the audited points, not everywhere",
    })
}

fn bounding_box(states: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for s in states {
        for i in 0..n {
            lo[i] = lo[i].min(s[i]);
            hi[i] = hi[i].max(s[i]);
        }
    }
    (lo, hi)
}
