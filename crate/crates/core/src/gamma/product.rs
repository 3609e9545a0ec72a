use serde::{Deserialize, Serialize};

use super::log_gamma::{log_gamma_ratio, stirling_correction, log_gamma_unchecked, STIRLING_MIN};
use super::GammaError;

/// Parameters of the finite product `∏_{i=a}^{b} (1 − αδ / (1 + (i + β)δ))`.
///
/// `a = b + 1` encodes the empty product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaProductParams {
    pub a: u64,
    pub b: u64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl GammaProductParams {
    pub fn new(a: u64, b: u64, alpha: f64, beta: f64, delta: f64) -> Result<Self, GammaError> {
        let p = Self { a, b, alpha, beta, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GammaError> {
        let bad = |msg: String| Err(GammaError::InvalidParams(msg));
        if self.a > self.b.saturating_add(1) {
            return bad(format!("a = {} exceeds b + 1 = {}", self.a, self.b as u128 + 1));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta = {} must be nonnegative", self.beta));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad(format!("delta = {} must be positive", self.delta));
        }
        if self.alpha * self.delta >= 1.0 {
            return Err(GammaError::StepTooLarge { alpha: self.alpha, delta: self.delta });
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.a == self.b.wrapping_add(1)
    }

    /// Number of factors, `b − a + 1`.
    pub fn len(&self) -> u64 {
        (self.b + 1) - self.a
    }

    /// `1 − αδ / (1 + (i + β)δ)`.
    pub fn factor(&self, i: u64) -> f64 {
        1.0 - self.alpha * self.delta / (1.0 + (i as f64 + self.beta) * self.delta)
    }
}

/// The finite product evaluated factor by factor.
pub fn product_direct(p: &GammaProductParams) -> Result<f64, GammaError> {
    p.validate()?;
    let mut prod = 1.0;
    for i in p.a..=p.b {
        let f = p.factor(i);
        if !(f > 0.0) {
            return Err(GammaError::NonPositiveFactor { index: i, value: f });
        }
        prod *= f;
    }
    Ok(prod)
}

/// The finite product through its gamma-function closed form
///
/// ```text
/// Γ(b+1+1/δ+β−α) Γ(a+1/δ+β)
/// ------------------------------
/// Γ(b+1+1/δ+β)   Γ(a+1/δ+β−α)
/// ```
///
/// evaluated in log space.
pub fn product_via_gamma(p: &GammaProductParams) -> Result<f64, GammaError> {
    Ok(log_product_via_gamma(p)?.exp())
}

/// Logarithm of [`product_via_gamma`].
pub fn log_product_via_gamma(p: &GammaProductParams) -> Result<f64, GammaError> {
    p.validate()?;
    let shift = 1.0 / p.delta + p.beta;
    let upper = (p.b + 1) as f64 + shift;
    let lower = p.a as f64 + shift;
    let alpha = p.alpha;
    Ok(log_gamma_ratio(lower - alpha, alpha)? - log_gamma_ratio(upper - alpha, alpha)?)
}

/// Signed margin `ln Γ(x+η) − ln Γ(x) − η ln x`.
///
/// Negative for `0 < η < 1`, positive for `η > 1`. `η = 1` is rejected since
/// `Γ(x+1)/Γ(x) = x` exactly.
pub fn ratio_power_margin(x: f64, eta: f64) -> Result<f64, GammaError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(GammaError::Domain(x));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(GammaError::InvalidParams(format!("eta = {eta} must be positive")));
    }
    if eta == 1.0 {
        return Err(GammaError::UnitExponent);
    }
    if x >= STIRLING_MIN {
        let y = x + eta;
        Ok((y - 0.5) * (eta / x).ln_1p() - eta + stirling_correction(y) - stirling_correction(x))
    } else {
        Ok(log_gamma_unchecked(x + eta) - log_gamma_unchecked(x) - eta * x.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: u64, b: u64, alpha: f64, beta: f64, delta: f64) -> GammaProductParams {
        GammaProductParams::new(a, b, alpha, beta, delta).unwrap()
    }

    #[test]
    fn empty_product_is_one() {
        let p = params(1, 0, 2.0, 0.0, 0.1);
        assert!(p.is_empty());
        assert_eq!(product_direct(&p).unwrap(), 1.0);
        assert_eq!(product_via_gamma(&p).unwrap(), 1.0);
    }

    #[test]
    fn single_factor() {
        let p = params(0, 0, 2.0, 0.0, 0.1);
        assert!((product_direct(&p).unwrap() - 0.8).abs() < 1e-15);
        assert!((product_via_gamma(&p).unwrap() - 0.8).abs() < 1e-14);
    }

    #[test]
    fn ten_factor_regression_pin() {
        // exact rational value 0.22383922383922383922..., 50-digit reference
        let p = params(0, 9, 2.0, 0.5, 0.1);
        let v = product_direct(&p).unwrap();
        assert!((v - 0.223_839_223_839_224).abs() < 1e-13);
        assert!((product_via_gamma(&p).unwrap() - v).abs() / v < 1e-12);
    }

    #[test]
    fn thousand_factors_agree() {
        let p = params(0, 999, 1.5, 0.25, 0.25);
        let d = product_direct(&p).unwrap();
        let g = product_via_gamma(&p).unwrap();
        assert!(((g - d) / d).abs() <= 1e-10, "direct {d} gamma {g}");
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            GammaProductParams::new(0, 0, 2.0, 0.0, 0.5),
            Err(GammaError::StepTooLarge { .. })
        ));
        assert!(GammaProductParams::new(3, 1, 1.0, 0.0, 0.1).is_err());
        assert!(GammaProductParams::new(0, 1, 1.0, -0.1, 0.1).is_err());
        assert!(GammaProductParams::new(0, 1, 0.0, 0.0, 0.1).is_err());
        let raw = GammaProductParams { a: 0, b: 4, alpha: 3.0, beta: 0.0, delta: 0.5 };
        assert!(product_direct(&raw).is_err());
        assert!(product_via_gamma(&raw).is_err());
    }

    #[test]
    fn margin_examples() {
        // ln Γ(1.5), 50-digit reference
        let m = ratio_power_margin(1.0, 0.5).unwrap();
        assert!((m - (-0.120_782_237_635_245_22)).abs() < 1e-15);
        assert!((ratio_power_margin(1.0, 2.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let m = ratio_power_margin(10.0, 0.3).unwrap();
        assert!((m - (-0.010_566_221_841_326_346)).abs() < 1e-15);
        assert_eq!(ratio_power_margin(3.0, 1.0), Err(GammaError::UnitExponent));
        assert!(ratio_power_margin(0.0, 0.5).is_err());
        assert!(ratio_power_margin(1.0, -0.5).is_err());
    }

    #[test]
    fn decreasing_in_b() {
        let mut prev = 1.0;
        for b in 0..200 {
            let v = product_direct(&params(0, b, 1.7, 0.3, 0.2)).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }
}
