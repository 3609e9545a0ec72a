use serde::Serialize;

use super::AnalysisError;
use crate::ensemble::CheckpointStats;

fn check_common(dt: f64, c: f64, m0: f64) -> Result<(), AnalysisError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(AnalysisError::Domain(format!("dt must be positive, got {dt}")));
    }
    if !(c.is_finite() && c >= 0.0) {
        return Err(AnalysisError::Domain(format!("C must be non-negative, got {c}")));
    }
    if !(m0.is_finite() && m0 >= 0.0) {
        return Err(AnalysisError::Domain(format!("m0 must be non-negative, got {m0}")));
    }
    Ok(())
}

/// Mean-square bound for explicit EM:
/// `(kΔt + 1)^{1−2K1} (m0 + C²(1+Δt)^{2K1})`.
///
/// Requires `K1 ≥ 1` and `Δt < 1/(2+K1)`.
pub fn em_envelope(k: u64, dt: f64, k1: f64, c: f64, m0: f64) -> Result<f64, AnalysisError> {
    check_common(dt, c, m0)?;
    if !(k1 >= 1.0) {
        return Err(AnalysisError::Domain(format!("EM envelope needs K1 >= 1, got {k1}")));
    }
    if dt >= 1.0 / (2.0 + k1) {
        return Err(AnalysisError::Domain(format!(
            "EM envelope needs dt < 1/(2+K1) = {}, got {dt}",
            1.0 / (2.0 + k1)
        )));
    }
    let e = 2.0 * k1;
    Ok((k as f64 * dt + 1.0).powf(1.0 - e) * (m0 + c * c * (1.0 + dt).powf(e)))
}

/// Mean-square bound for backward EM:
/// `((k+1)Δt + 1)^{1−2K1} (m0 + C²(1+(1+2K1)Δt)^{2K1})`.
///
/// Requires `K1 > 0.5` and `Δt < min(1/|Kbar|, 1/K1)`.
pub fn bem_envelope(k: u64, dt: f64, k1: f64, c: f64, m0: f64, kbar: f64) -> Result<f64, AnalysisError> {
    check_common(dt, c, m0)?;
    if !(k1 > 0.5) {
        return Err(AnalysisError::Domain(format!("BEM envelope needs K1 > 0.5, got {k1}")));
    }
    let limit = (1.0 / kbar.abs()).min(1.0 / k1);
    if dt >= limit {
        return Err(AnalysisError::Domain(format!(
            "BEM envelope needs dt < min(1/|Kbar|, 1/K1) = {limit}, got {dt}"
        )));
    }
    Ok(bem_envelope_expr(k, dt, k1, c, m0))
}

/// The backward-EM envelope expression for any `K1 > 0`, without the
/// theorem's `K1 > 0.5` and step-size hypotheses.
///
/// Used when an audited `K1` falls below 0.5; the result is then a comparison
/// curve rather than a proven bound.
pub fn bem_envelope_formula(k: u64, dt: f64, k1: f64, c: f64, m0: f64) -> Result<f64, AnalysisError> {
    check_common(dt, c, m0)?;
    if !(k1 > 0.0 && k1.is_finite()) {
        return Err(AnalysisError::Domain(format!("K1 must be positive, got {k1}")));
    }
    Ok(bem_envelope_expr(k, dt, k1, c, m0))
}

fn bem_envelope_expr(k: u64, dt: f64, k1: f64, c: f64, m0: f64) -> f64 {
    let e = 2.0 * k1;
    ((k + 1) as f64 * dt + 1.0).powf(1.0 - e) * (m0 + c * c * (1.0 + (1.0 + e) * dt).powf(e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceViolation {
    pub k: u64,
    pub lhs: f64,
    pub rhs: f64,
    /// `(lhs − rhs) / combined standard error`.
    pub excess_sigmas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub checked: usize,
    /// Pairs not at unit spacing or with blown-up paths.
    pub skipped: usize,
    pub sigmas: f64,
    pub violations: Vec<RecurrenceViolation>,
}

/// Checks `m(k+1) ≤ (1 − K1Δt/(1+kΔt))² m(k) + C²(1+kΔt)^{−2K1}Δt` on every
/// pair of consecutive checkpoints, allowing `sigmas` combined standard errors.
pub fn em_recurrence_check(
    series: &[CheckpointStats],
    dt: f64,
    k1: f64,
    c: f64,
    sigmas: f64,
) -> Result<RecurrenceReport, AnalysisError> {
    if !(dt > 0.0 && k1 > 0.0 && dt * k1 < 1.0) {
        return Err(AnalysisError::Domain(format!(
            "recurrence needs dt > 0, K1 > 0 and dt*K1 < 1 (dt = {dt}, K1 = {k1})"
        )));
    }
    let mut report = RecurrenceReport { checked: 0, skipped: 0, sigmas, violations: Vec::new() };
    for w in series.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.k != a.k + 1 || a.blown_up > 0 || b.blown_up > 0 {
            report.skipped += 1;
            continue;
        }
        let s = 1.0 + a.k as f64 * dt;
        let factor = (1.0 - k1 * dt / s).powi(2);
        let rhs = factor * a.mean_square + c * c * s.powf(-2.0 * k1) * dt;
        let se = (b.std_error.powi(2) + (factor * a.std_error).powi(2)).sqrt();
        // rounding allowance for noise-free series evaluated in floating point
        let slack = sigmas * se + 1e-12 * rhs.abs();
        report.checked += 1;
        if b.mean_square - rhs > slack {
            report.violations.push(RecurrenceViolation {
                k: a.k,
                lhs: b.mean_square,
                rhs,
                excess_sigmas: if se > 0.0 { (b.mean_square - rhs) / se } else { f64::INFINITY },
            });
        }
    }
    Ok(report)
}
