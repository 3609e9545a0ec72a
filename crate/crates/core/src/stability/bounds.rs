//! Log-space margins of the gamma-ratio estimates behind the envelopes.
//!
//! Each function returns the margin of every intermediate inequality of the
//! chain (`ln rhs − ln lhs`, non-negative when it holds) followed by the
//! margin of the overall bound. Non-integer exponents are split as
//! `η = [η] + {η}`: the integer part telescopes to a finite product and the
//! fractional part uses `Γ(x+{η})/Γ(x) ≤ x^{{η}}`.

use crate::gamma::{log_gamma_ratio, product_direct, ratio_power_margin, GammaError, GammaProductParams};

pub type Stages = Vec<(&'static str, f64)>;

/// `ln Γ(x+η) − ln Γ(x) − η ln x`, using the exact identity at `η = 1` and
/// zero at `η = 0`.
fn power_margin(x: f64, eta: f64) -> Result<f64, GammaError> {
    if eta == 0.0 {
        Ok(0.0)
    } else if eta == 1.0 {
        Ok(log_gamma_ratio(x, 1.0)? - x.ln())
    } else {
        ratio_power_margin(x, eta)
    }
}

/// Margins of `Γ(z+η)/Γ(z) ≤ z^{{η}} ∏_{i=0}^{[η]−1}(z+{η}+i) ≤ top^η`.
///
/// Pushes the fractional-part step and the closing comparison with `top`.
fn floor_split(stages: &mut Stages, z: f64, eta: f64, top: f64) -> Result<(), GammaError> {
    let whole = eta.floor();
    let frac = eta - whole;
    let split: f64 = frac * z.ln() + (0..whole as u64).map(|i| (z + frac + i as f64).ln()).sum::<f64>();
    stages.push(("fractional-part ratio", -power_margin(z, frac)?));
    stages.push(("integer-part product", eta * top.ln() - split));
    Ok(())
}

fn check_inputs(k: u64, dt: f64, k1: f64) -> Result<(), GammaError> {
    if !(dt > 0.0 && dt.is_finite()) || !(k1 > 0.0 && k1.is_finite()) {
        return Err(GammaError::InvalidParams(format!("need dt > 0 and K1 > 0 (dt = {dt}, K1 = {k1})")));
    }
    if k1 * dt >= 1.0 {
        return Err(GammaError::StepTooLarge { alpha: k1, delta: dt });
    }
    if k == 0 {
        return Err(GammaError::InvalidParams("k must be positive".into()));
    }
    Ok(())
}

/// `Γ(k+1/Δt−K1)²Γ(1/Δt)² / (Γ(k+1/Δt)²Γ(1/Δt−K1)²) ≤ ((k−K1)Δt+1)^{−2K1}`.
pub fn em_first_term(k: u64, dt: f64, k1: f64) -> Result<Stages, GammaError> {
    check_inputs(k, dt, k1)?;
    let x = 1.0 / dt;
    let hi = k as f64 + x - k1;
    let lo = x - k1;
    let lhs = 2.0 * (log_gamma_ratio(lo, k1)? - log_gamma_ratio(hi, k1)?);
    let mut stages = vec![("lower ratio power bound", power_margin(hi, k1)?)];
    floor_split(&mut stages, lo, k1, x)?;
    stages.push(("overall", -2.0 * k1 * ((k as f64 - k1) * dt).ln_1p() - lhs));
    Ok(stages)
}

/// `Γ(k+1/Δt−K1)²Γ(r+1+1/Δt)² / (Γ(k+1/Δt)²Γ(r+1+1/Δt−K1)²)
///  ≤ ((k−K1)Δt+1)^{−2K1}((r+1)Δt+1)^{2K1}`.
pub fn em_second_term(k: u64, r: u64, dt: f64, k1: f64) -> Result<Stages, GammaError> {
    check_inputs(k, dt, k1)?;
    if r >= k {
        return Err(GammaError::InvalidParams(format!("need r < k (r = {r}, k = {k})")));
    }
    let x = 1.0 / dt;
    let hi = k as f64 + x - k1;
    let y = (r + 1) as f64 + x;
    let lhs = 2.0 * (log_gamma_ratio(y - k1, k1)? - log_gamma_ratio(hi, k1)?);
    let mut stages = vec![("lower ratio power bound", power_margin(hi, k1)?)];
    floor_split(&mut stages, y - k1, k1, y)?;
    let rhs = 2.0 * k1 * (((r + 1) as f64 * dt).ln_1p() - ((k as f64 - k1) * dt).ln_1p());
    stages.push(("overall", rhs - lhs));
    Ok(stages)
}

/// `Γ(k+1+1/Δt)Γ(1+2K1+1/Δt) / (Γ(k+1+1/Δt+2K1)Γ(1+1/Δt))
///  ≤ ((k+1)Δt+1)^{−2K1}((1+2K1)Δt+1)^{2K1}`.
pub fn bem_first_term(k: u64, dt: f64, k1: f64) -> Result<Stages, GammaError> {
    bem_term(k, 0, dt, k1)
}

/// `Γ(k+1+1/Δt)Γ(r+1+2K1+1/Δt) / (Γ(k+1+1/Δt+2K1)Γ(r+1+1/Δt))
///  ≤ ((k+1)Δt+1)^{−2K1}((r+1+2K1)Δt+1)^{2K1}`.
pub fn bem_second_term(k: u64, r: u64, dt: f64, k1: f64) -> Result<Stages, GammaError> {
    if r >= k {
        return Err(GammaError::InvalidParams(format!("need r < k (r = {r}, k = {k})")));
    }
    bem_term(k, r, dt, k1)
}

fn bem_term(k: u64, r: u64, dt: f64, k1: f64) -> Result<Stages, GammaError> {
    check_inputs(k, dt, k1)?;
    if k1 <= 0.5 {
        return Err(GammaError::InvalidParams(format!("BEM bounds need K1 > 0.5, got {k1}")));
    }
    let e = 2.0 * k1;
    let x = 1.0 / dt;
    let hi = (k + 1) as f64 + x;
    let y = (r + 1) as f64 + x;
    let lhs = log_gamma_ratio(y, e)? - log_gamma_ratio(hi, e)?;
    let mut stages = vec![("lower ratio power bound", power_margin(hi, e)?)];
    floor_split(&mut stages, y, e, y + e)?;
    let rhs = e * (((r + 1) as f64 + e) * dt).ln_1p() - e * ((k + 1) as f64 * dt).ln_1p();
    stages.push(("overall", rhs - lhs));
    Ok(stages)
}

/// Noise-free EM contraction against its gamma bound:
/// `∏_{i=0}^{k−1}(1 − K1Δt/(1+iΔt))² ≤ ((k−K1)Δt+1)^{−2K1}`.
pub fn em_product_envelope(k: u64, dt: f64, k1: f64) -> Result<Stages, GammaError> {
    check_inputs(k, dt, k1)?;
    let p = product_direct(&GammaProductParams::new(0, k - 1, k1, 0.0, dt)?)?;
    Ok(vec![("overall", -2.0 * k1 * ((k as f64 - k1) * dt).ln_1p() - 2.0 * p.ln())])
}

pub fn worst(stages: &Stages) -> (&'static str, f64) {
    stages
        .iter()
        .copied()
        .fold(("none", f64::INFINITY), |acc, s| if s.1 < acc.1 { s } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;

    // every stage of each chain on a subset of the acceptance grid
    #[test]
    fn overall_margins_positive_on_small_grid() {
        for &dt in &[0.05, 0.1, 0.2] {
            for &k1 in &[1.0, 1.5, 2.0, 2.7, 3.0] {
                for k in [2u64, 3, 7, 50, 200] {
                    let s = em_first_term(k, dt, k1).unwrap();
                    assert!(worst(&s).1 >= -1e-12, "{dt} {k1} {k} {s:?}");
                    for r in [0, k / 2, k - 1] {
                        let s = em_second_term(k, r, dt, k1).unwrap();
                        assert!(worst(&s).1 >= -1e-12, "{dt} {k1} {k} {r} {s:?}");
                        let s = bem_second_term(k, r, dt, k1).unwrap();
                        assert!(worst(&s).1 >= -1e-12, "{dt} {k1} {k} {r} {s:?}");
                    }
                    let s = bem_first_term(k, dt, k1).unwrap();
                    assert!(worst(&s).1 >= -1e-12, "{dt} {k1} {k} {s:?}");
                }
            }
        }
    }

    #[test]
    fn integer_exponent_has_exact_steps() {
        // K1 = 2: fractional part vanishes
        let s = em_first_term(10, 0.1, 2.0).unwrap();
        assert_eq!(s[1], ("fractional-part ratio", 0.0));
        assert!(s[2].1 > 0.0);
    }

    #[test]
    fn grid_minima_match_reference() {
        // double-precision reference minima over k ∈ 2..=200, r < k,
        // dt ∈ {0.05, 0.1, 0.2}; all four are attained at dt = 0.05
        let ks = 2..=200u64;
        let min = |f: &dyn Fn(u64) -> f64| ks.clone().map(f).fold(f64::INFINITY, f64::min);
        let overall = |s: Stages| s.last().unwrap().1;
        let first = min(&|k| overall(em_first_term(k, 0.05, 1.0).unwrap()));
        assert!((first - 2.0 * (20.0f64 / 19.0).ln()).abs() < 1e-12);
        let second = overall(em_second_term(200, 199, 0.05, 1.0).unwrap());
        assert!((second - 0.009_111_633_071_493_763).abs() < 1e-9);
        let b1 = min(&|k| overall(bem_first_term(k, 0.05, 0.6).unwrap()));
        assert!((b1 - 0.061_574_919_111_821_56).abs() < 1e-9);
        let b2 = overall(bem_second_term(200, 199, 0.05, 0.6).unwrap());
        assert!((b2 - 0.006_525_205_052_661_409).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(em_first_term(0, 0.1, 1.0).is_err());
        assert!(em_first_term(5, 0.5, 2.0).is_err());
        assert!(em_second_term(5, 5, 0.1, 1.0).is_err());
        assert!(bem_first_term(5, 0.1, 0.5).is_err());
    }

    #[test]
    fn product_envelope_consistency() {
        for k in 2..=200 {
            let s = em_product_envelope(k, 0.1, 2.5).unwrap();
            assert!(s[0].1 >= 0.0);
        }
    }
}
