use serde::Serialize;

use super::AnalysisError;
use crate::ensemble::CheckpointStats;

pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;
pub const DEFAULT_TOLERANCE: f64 = 0.15;
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayOptions {
    /// Fraction of `log(1+t)` range, counted back from the last checkpoint.
    pub window_fraction: f64,
    /// Allowed excess of the slope over the theoretical bound.
    pub tolerance: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { window_fraction: DEFAULT_WINDOW_FRACTION, tolerance: DEFAULT_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayEstimate {
    /// Fitted `d log m₂ / d log(1+t)`.
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
    pub fit_window: (f64, f64),
    pub points: usize,
    /// Window checkpoints dropped because their mean square was not positive.
    pub excluded: usize,
    /// `−(2K1 − 1)`.
    pub theoretical_bound: f64,
    pub tolerance: f64,
    pub conforms: bool,
}

/// Least-squares slope of `log m₂` against `log(1+t)` over the tail window.
pub fn estimate_decay_exponent(
    series: &[CheckpointStats],
    k1: f64,
    opts: DecayOptions,
) -> Result<DecayEstimate, AnalysisError> {
    if !(opts.window_fraction > 0.0 && opts.window_fraction < 1.0) {
        return Err(AnalysisError::Domain(format!(
            "window fraction must lie in (0, 1), got {}",
            opts.window_fraction
        )));
    }
    if !k1.is_finite() || !opts.tolerance.is_finite() {
        return Err(AnalysisError::Domain("K1 and tolerance must be finite".into()));
    }
    let (first, last) = match (series.first(), series.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(AnalysisError::InsufficientPoints { needed: MIN_FIT_POINTS, found: 0 }),
    };
    let u_lo = first.t.ln_1p();
    let u_hi = last.t.ln_1p();
    let cut = u_hi - opts.window_fraction * (u_hi - u_lo);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut window = (f64::INFINITY, f64::NEG_INFINITY);
    let mut excluded = 0;
    for c in series.iter().filter(|c| c.t.ln_1p() >= cut) {
        if c.blown_up > 0 {
            return Err(AnalysisError::BlowUpInWindow { k: c.k, blown_up: c.blown_up });
        }
        if !(c.mean_square > 0.0) {
            log::warn!("checkpoint k = {} has mean square {}; excluded from the fit", c.k, c.mean_square);
            excluded += 1;
            continue;
        }
        xs.push(c.t.ln_1p());
        ys.push(c.mean_square.ln());
        window = (window.0.min(c.t), window.1.max(c.t));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(AnalysisError::InsufficientPoints { needed: MIN_FIT_POINTS, found: xs.len() });
    }

    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let slope_std_error = (ssr / (n - 2.0) / sxx).sqrt();
    let theoretical_bound = -(2.0 * k1 - 1.0);

    Ok(DecayEstimate {
        slope,
        slope_std_error,
        intercept,
        fit_window: window,
        points: xs.len(),
        excluded,
        theoretical_bound,
        tolerance: opts.tolerance,
        conforms: slope <= theoretical_bound + opts.tolerance,
    })
}
