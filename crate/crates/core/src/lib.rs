//! Continuous-time linear estimation for integrator signal models.
//!
//! The crate covers the causal Kalman-Bucy filter, the fixed-interval smoother
//! computed by a backward sweep over the filter output, and an independent
//! Euler-Lagrange boundary-value solver for the same smoothing problem. The
//! [`analysis`] module predicts and measures the steady-state tracking error of
//! both estimators when the true signal carries a polynomial drift the model
//! does not know about.
//!
//! All series live densely on a uniform [`TimeGrid`]; every operation is a pure
//! function of its inputs.

pub mod analysis;
mod error;
pub mod estimators;
pub mod riccati;
pub mod signals;
pub mod statespace;

pub use error::{Error, Result};
pub use statespace::{build_companion, grid_times, GeneralLinearModel, IntegratorModel, TimeGrid};
