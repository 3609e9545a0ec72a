//! Mean-square polynomial stability of Euler–Maruyama and backward
//! Euler–Maruyama for SDEs with time-decaying coefficients.

pub mod ensemble;
pub mod gamma;
pub mod integrators;
pub mod model;
pub mod stability;
