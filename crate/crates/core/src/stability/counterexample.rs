use serde::Serialize;

use super::AnalysisError;

/// Lower bounds `b_k` on `E(|Y_k| | Y₁)` for explicit EM on the cubic
/// counterexample, started from `|Y₁| ≥ 3√((1+Δt)/Δt)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundSequence {
    pub dt: f64,
    /// `(k, b_k)` for `k = 1, 2, …` up to `k_max` or the first overflow.
    pub values: Vec<(u64, f64)>,
    /// First `k` whose bound is not finite.
    pub diverged_at: Option<u64>,
    /// First `k` where `b_k < √((1+kΔt)/Δt)(k+2)`.
    pub invariant_failure: Option<u64>,
}

impl LowerBoundSequence {
    /// First `k` with `b_k > cap`, counting overflow as exceeding.
    pub fn exceeds(&self, cap: f64) -> Option<u64> {
        self.values
            .iter()
            .find(|(_, b)| *b > cap)
            .map(|(k, _)| *k)
            .or(self.diverged_at)
    }

    pub fn invariant_holds(&self) -> bool {
        self.invariant_failure.is_none()
    }
}

pub fn invariant_threshold(dt: f64, k: u64) -> f64 {
    ((1.0 + k as f64 * dt) / dt).sqrt() * (k + 2) as f64
}

/// Noise standard deviations by which the first EM state clears the
/// divergence threshold in [`counterexample_start`].
pub const START_MARGIN_SIGMAS: f64 = 8.0;

/// Smallest `x0` on a 0.1 grid from which one noise-free EM step of the cubic
/// counterexample lands beyond `3√((1+Δt)/Δt)` by [`START_MARGIN_SIGMAS`]
/// standard deviations of the first increment, so that every path meets the
/// recursion's starting hypothesis.
pub fn counterexample_start(dt: f64) -> Result<f64, AnalysisError> {
    if !(dt > 0.0 && dt < 0.5) {
        return Err(AnalysisError::Domain(format!("dt must lie in (0, 0.5), got {dt}")));
    }
    // diffusion at t = 0 is 1, so the first increment has standard deviation √Δt
    let target = invariant_threshold(dt, 1) + START_MARGIN_SIGMAS * dt.sqrt();
    (1..=10_000)
        .map(|i| i as f64 / 10.0)
        .find(|&x0| (x0 + dt * (-3.0 * x0 - x0 * x0 * x0)).abs() >= target)
        .ok_or_else(|| AnalysisError::Domain(format!("no start below 1000 for dt = {dt}")))
}

/// Runs `b₁ = 3√((1+Δt)/Δt)`, `b_{k+1} = (Δt/(1+kΔt)) b_k³ − b_k − 1`.
pub fn counterexample_lower_bound(dt: f64, k_max: u64) -> Result<LowerBoundSequence, AnalysisError> {
    if !(dt > 0.0 && dt < 0.5) {
        return Err(AnalysisError::Domain(format!("dt must lie in (0, 0.5), got {dt}")));
    }
    if k_max == 0 {
        return Err(AnalysisError::Domain("k_max must be positive".into()));
    }
    let mut seq = LowerBoundSequence { dt, values: Vec::new(), diverged_at: None, invariant_failure: None };
    let mut b = ((1.0 + dt) / dt).sqrt() * 3.0;
    for k in 1..=k_max {
        if !b.is_finite() {
            seq.diverged_at = Some(k);
            break;
        }
        if b < invariant_threshold(dt, k) && seq.invariant_failure.is_none() {
            seq.invariant_failure = Some(k);
        }
        seq.values.push((k, b));
        b = dt / (1.0 + k as f64 * dt) * b * b * b - b - 1.0;
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_terms() {
        let s = counterexample_lower_bound(0.1, 10).unwrap();
        assert!((s.values[0].1 - 3.0 * 11f64.sqrt()).abs() < 1e-13);
        // 50-digit reference
        assert!((s.values[1].1 / 78.598_994_968_529_6 - 1.0).abs() < 1e-6);
        assert!((s.values[2].1 / 40_384.486_763_823_9 - 1.0).abs() < 1e-6);
        assert!(s.invariant_holds());
        assert_eq!(s.exceeds(1e12), Some(4));
    }

    #[test]
    fn slow_step_still_diverges() {
        let s = counterexample_lower_bound(0.49, 50).unwrap();
        assert!(s.invariant_holds());
        assert_eq!(s.exceeds(1e12), Some(5));
        assert!(s.diverged_at.is_some());
    }

    #[test]
    fn start_clears_threshold() {
        assert_eq!(counterexample_start(0.1).unwrap(), 5.5);
        for dt in [0.01, 0.1, 0.25, 0.49] {
            let x0 = counterexample_start(dt).unwrap();
            let y1 = x0 + dt * (-3.0 * x0 - x0.powi(3));
            assert!(y1.abs() >= invariant_threshold(dt, 1) + START_MARGIN_SIGMAS * dt.sqrt());
            let below = x0 - 0.1;
            assert!((below + dt * (-3.0 * below - below.powi(3))).abs() < y1.abs());
        }
        assert!(counterexample_start(0.5).is_err());
    }

    #[test]
    fn domain() {
        for dt in [0.0, 0.5, 0.6, -0.1, f64::NAN] {
            assert!(counterexample_lower_bound(dt, 10).is_err());
        }
    }

    proptest::proptest! {
        #[test]
        fn invariant_until_overflow(dt in 1e-3f64..0.499) {
            let s = counterexample_lower_bound(dt, 10_000).unwrap();
            proptest::prop_assert!(s.invariant_holds());
            proptest::prop_assert!(s.diverged_at.is_some());
        }
    }
}
