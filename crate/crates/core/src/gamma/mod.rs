//! Gamma-function kernel: log-gamma, the finite-product/gamma-ratio identity
//! and the power bounds on `Γ(x+η)/Γ(x)`.
//!
//! The product identity
//!
//! ```text
//! ∏_{i=a}^{b} (1 − αδ/(1+(i+β)δ)) = Γ(b+1+1/δ+β−α) Γ(a+1/δ+β) / (Γ(b+1+1/δ+β) Γ(a+1/δ+β−α))
//! ```
//!
//! follows from writing the finite product as a ratio of two infinite
//! products and applying the Euler product form of Γ. That form converges far
//! too slowly to evaluate, so everything here runs on [`log_gamma`].

mod log_gamma;
mod product;

use thiserror::Error;

pub use log_gamma::{log_gamma, log_gamma_ratio};
pub use product::{
    log_product_via_gamma, product_direct, product_via_gamma, ratio_power_margin,
    GammaProductParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GammaError {
    #[error("argument {0} outside the domain (0, inf)")]
    Domain(f64),
    #[error("invalid product parameters: {0}")]
    InvalidParams(String),
    #[error("step delta = {delta} must satisfy delta < 1/alpha (alpha = {alpha})")]
    StepTooLarge { alpha: f64, delta: f64 },
    #[error("factor {index} of the product is non-positive ({value})")]
    NonPositiveFactor { index: u64, value: f64 },
    #[error("eta = 1 is excluded: Γ(x+1)/Γ(x) = x exactly")]
    UnitExponent,
}
