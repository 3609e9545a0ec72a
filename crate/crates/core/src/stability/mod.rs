//! Decay envelopes, empirical decay exponents, the one-step recurrence check,
//! the counterexample's divergence bound and verification of the gamma-ratio
//! estimates.

pub mod bounds;
mod counterexample;
mod decay;
mod envelope;
pub mod verify;

use thiserror::Error;

use crate::gamma::GammaError;

pub use counterexample::{
    counterexample_lower_bound, counterexample_start, invariant_threshold, LowerBoundSequence,
    START_MARGIN_SIGMAS,
};
pub use decay::{
    estimate_decay_exponent, DecayEstimate, DecayOptions, DEFAULT_TOLERANCE,
    DEFAULT_WINDOW_FRACTION, MIN_FIT_POINTS,
};
pub use envelope::{
    bem_envelope, bem_envelope_formula, em_envelope, em_recurrence_check, RecurrenceReport,
    RecurrenceViolation,
};
pub use verify::{verify_gamma, VerifyGrid, VerifyReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("need at least {needed} usable checkpoints in the fit window, found {found}")]
    InsufficientPoints { needed: usize, found: usize },
    #[error("checkpoint k = {k} in the fit window has {blown_up} blown-up paths")]
    BlowUpInWindow { k: u64, blown_up: u64 },
    #[error(transparent)]
    Gamma(#[from] GammaError),
}
