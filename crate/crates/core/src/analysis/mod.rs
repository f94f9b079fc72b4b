//! Steady-state error analysis.
//!
//! * [`predict_sse`] gives the closed-form steady-state regime of the filter and
//!   of the smoother for a drift `a tᵐ/m!` entering an n-th order model.
//! * [`loop_transfer`] and [`final_value_error`] describe the filter as a
//!   unity-feedback loop with `n` pure integrators.
//! * [`classify_steady_state`] reads the regime back off a simulated error series.
//! * [`monte_carlo_variance`] compares filter and smoother error statistics.

mod montecarlo;
mod steady;

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::estimators::Subject;
use crate::riccati::CovarianceSchedule;
use crate::statespace::IntegratorModel;
use crate::{Error, Result};

pub use montecarlo::{monte_carlo_variance, monte_carlo_variance_with, smoother_advantage, MonteCarloStats};
pub use steady::{
    classify_steady_state, error_series, lag_to_settle, ErrorSeries, SteadyStateVerdict, VerdictRegime,
    VerdictThresholds,
};

/// Default interior window fraction excluded at each end of the interval.
pub const WINDOW_FRACTION: f64 = 0.2;
/// Default horizon in units of the slowest closed-loop time constant.
pub const HORIZON_TIME_CONSTANTS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SseRegime {
    Zero,
    Constant(f64),
    Unbounded,
}

impl SseRegime {
    pub fn value(&self) -> Option<f64> {
        match self {
            SseRegime::Constant(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for SseRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SseRegime::Zero => f.write_str("Zero"),
            SseRegime::Constant(v) => write!(f, "Constant {v}"),
            SseRegime::Unbounded => f.write_str("Unbounded"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsePrediction {
    pub regime: SseRegime,
    pub subject: Subject,
    /// Set when the value relies on the σ ≠ ρ scaling rather than the σ = ρ case.
    pub extended: bool,
}

/// Open-loop transfer function `(k₁ sⁿ⁻¹ + … + kₙ) / sⁿ` of the steady filter.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    numerator: Vec<f64>,
}

impl TransferFunction {
    pub fn new(numerator: Vec<f64>) -> Result<Self> {
        if numerator.is_empty() || numerator.iter().any(|k| !k.is_finite()) {
            return Err(Error::contract("transfer function needs finite gains k1..kn"));
        }
        Ok(Self { numerator })
    }

    /// `(k₁, …, kₙ)`
    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    /// Number of pure integrators in the loop.
    pub fn type_order(&self) -> usize {
        self.numerator.len()
    }

    pub fn leading_gain(&self) -> f64 {
        *self.numerator.last().expect("non-empty")
    }

    /// Roots of `sⁿ + k₁ sⁿ⁻¹ + … + kₙ`.
    pub fn closed_loop_poles(&self) -> Vec<Complex64> {
        let n = self.type_order();
        let companion = DMatrix::from_fn(n, n, |i, j| {
            if i == 0 {
                -self.numerator[j]
            } else if j + 1 == i {
                1.0
            } else {
                0.0
            }
        });
        companion.complex_eigenvalues().iter().copied().collect()
    }

    /// `1 / min |Re(pole)|`; infinite when a pole sits on the imaginary axis.
    pub fn slowest_time_constant(&self) -> f64 {
        let rate = self
            .closed_loop_poles()
            .iter()
            .map(|p| p.re.abs())
            .fold(f64::INFINITY, f64::min);
        1.0 / rate
    }
}

/// Steady gain vector `k = P∞ h / ρ²` of an integrator model.
pub fn loop_transfer(schedule: &CovarianceSchedule, model: &IntegratorModel) -> Result<TransferFunction> {
    let p_inf = schedule.steady_state().ok_or(Error::NonConvergence {
        iterations: schedule.grid().steps(),
        residual: f64::NAN,
    })?;
    steady_transfer(p_inf, model)
}

/// Same as [`loop_transfer`] from an already computed steady covariance.
pub fn steady_transfer(p_inf: &DMatrix<f64>, model: &IntegratorModel) -> Result<TransferFunction> {
    let n = model.n();
    if p_inf.nrows() != n || p_inf.ncols() != n {
        return Err(Error::contract("steady covariance does not match the model order"));
    }
    let rho2 = model.rho() * model.rho();
    TransferFunction::new((0..n).map(|i| p_inf[(i, 0)] / rho2).collect())
}

/// Limit of `s E(s)` for the unity-feedback loop driven by `a t^(p−1)/(p−1)!`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FinalValue {
    Zero,
    /// Reference minus output.
    Finite(f64),
    Unbounded,
}

/// Final value theorem on `E(s) = R(s) / (1 + G(s))` with `R(s) = a / sᵖ`:
/// `s E(s) = a s^(n+1−p) / (sⁿ + k₁ sⁿ⁻¹ + … + kₙ)`.
pub fn final_value_error(tf: &TransferFunction, a: f64, p: u32) -> Result<FinalValue> {
    if p == 0 {
        return Err(Error::contract("input order p must be at least 1"));
    }
    if a == 0.0 {
        return Ok(FinalValue::Zero);
    }
    let excess = tf.type_order() as i64 + 1 - p as i64;
    Ok(match excess {
        e if e > 0 => FinalValue::Zero,
        0 => FinalValue::Finite(a / tf.leading_gain()),
        _ => FinalValue::Unbounded,
    })
}

/// Closed-form steady-state error of the first state component.
///
/// The filter is a type-n loop tracking a degree-(m+n) polynomial, so it has a
/// constant error `−a/kₙ` (estimate minus truth) for `m = 0` and none otherwise.
/// The smoother error is zero for `m < n`, constant for `m = n` and unbounded for
/// `m > n`. The constant follows from the adjoint cascade
/// `λₙ = −2 a tᵐ/(m! σ²)`, `λₖ₋₁ = −λₖ'`, `e₁ = −ρ² λ₁'/2`, which yields
/// `e₁ = (−1)ⁿ⁺¹ a (ρ/σ)²`.
pub fn predict_sse(
    n: usize,
    m: u32,
    a: f64,
    sigma: f64,
    rho: f64,
    subject: Subject,
    gains: Option<&TransferFunction>,
) -> Result<SsePrediction> {
    if n == 0 || !(sigma > 0.0) || !(rho > 0.0) || !a.is_finite() {
        return Err(Error::contract("prediction needs n ≥ 1, σ > 0, ρ > 0 and finite a"));
    }
    let n32 = n as u32;
    let (regime, extended) = match subject {
        _ if a == 0.0 => (SseRegime::Zero, false),
        Subject::Filter if m == 0 => {
            let tf = gains.ok_or_else(|| Error::contract("filter offset prediction needs the loop gains"))?;
            if tf.type_order() != n {
                return Err(Error::contract("gain vector length does not match n"));
            }
            (SseRegime::Constant(-a / tf.leading_gain()), false)
        }
        Subject::Filter => (SseRegime::Unbounded, false),
        Subject::Smoother if m < n32 => (SseRegime::Zero, false),
        Subject::Smoother if m == n32 => {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let ratio = rho / sigma;
            (SseRegime::Constant(sign * a * ratio * ratio), sigma != rho)
        }
        Subject::Smoother => (SseRegime::Unbounded, false),
    };
    Ok(SsePrediction { regime, subject, extended })
}

/// Horizon long enough for the smoother's boundary layers to clear the
/// interior window: at least [`HORIZON_TIME_CONSTANTS`] slowest time
/// constants, extended in whole time constants until the filter error at the
/// end of the interval, damped over the excluded tail, falls below 1e-3
/// relative to the drift amplitude.
pub fn default_horizon(tf: &TransferFunction, m: u32, window_fraction: f64) -> f64 {
    let tau = tf.slowest_time_constant();
    let mut horizon = HORIZON_TIME_CONSTANTS * tau;
    if m as usize > tf.type_order() || !tau.is_finite() {
        return horizon;
    }
    let tail = |t: f64| {
        let growth = (1..=m).fold(1.0, |acc, j| acc * t / j as f64) / tf.leading_gain();
        (-window_fraction * t / tau).exp() * growth.max(1.0)
    };
    while tail(horizon) > 1e-3 && horizon < 1e4 * tau {
        horizon += tau;
    }
    horizon
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoother(n: usize, m: u32, a: f64) -> SseRegime {
        predict_sse(n, m, a, 1.0, 1.0, Subject::Smoother, None).unwrap().regime
    }

    #[test]
    fn smoother_table() {
        for n in 1..=4usize {
            for m in 0..=(n as u32 + 2) {
                let regime = smoother(n, m, 1.0);
                match m.cmp(&(n as u32)) {
                    std::cmp::Ordering::Less => assert_eq!(regime, SseRegime::Zero),
                    std::cmp::Ordering::Equal => {
                        let v = regime.value().unwrap();
                        assert_eq!(v.abs(), 1.0, "magnitude |a|");
                        assert_eq!(v, if n % 2 == 1 { 1.0 } else { -1.0 });
                    }
                    std::cmp::Ordering::Greater => assert_eq!(regime, SseRegime::Unbounded),
                }
            }
        }
        assert_eq!(smoother(1, 0, 1.0), SseRegime::Zero);
        assert_eq!(smoother(2, 1, 5.0), SseRegime::Zero);
        assert_eq!(smoother(3, 3, 0.0), SseRegime::Zero);
    }

    #[test]
    fn extended_prediction_scales_with_noise_ratio() {
        let p = predict_sse(1, 1, 2.0, 2.0, 1.0, Subject::Smoother, None).unwrap();
        assert_eq!(p.regime, SseRegime::Constant(0.5));
        assert!(p.extended);
        assert!(!predict_sse(1, 1, 2.0, 1.5, 1.5, Subject::Smoother, None).unwrap().extended);
    }

    #[test]
    fn filter_predictions() {
        let tf = TransferFunction::new(vec![1.0]).unwrap();
        let p = predict_sse(1, 0, 1.0, 1.0, 1.0, Subject::Filter, Some(&tf)).unwrap();
        assert_eq!(p.regime, SseRegime::Constant(-1.0));
        assert!(predict_sse(1, 0, 1.0, 1.0, 1.0, Subject::Filter, None).is_err());
        for m in 1..5 {
            let p = predict_sse(2, m, 1.0, 1.0, 1.0, Subject::Filter, None).unwrap();
            assert_eq!(p.regime, SseRegime::Unbounded);
        }
        let p = predict_sse(2, 0, 0.0, 1.0, 1.0, Subject::Filter, None).unwrap();
        assert_eq!(p.regime, SseRegime::Zero);
    }

    #[test]
    fn final_value_law() {
        let tf = TransferFunction::new(vec![1.0]).unwrap();
        assert_eq!(final_value_error(&tf, 1.0, 1).unwrap(), FinalValue::Zero);
        assert_eq!(final_value_error(&tf, 1.0, 2).unwrap(), FinalValue::Finite(1.0));
        assert_eq!(final_value_error(&tf, 1.0, 3).unwrap(), FinalValue::Unbounded);
        let tf3 = TransferFunction::new(vec![2.0, 2.0, 4.0]).unwrap();
        for p in 1..=3 {
            assert_eq!(final_value_error(&tf3, 3.0, p).unwrap(), FinalValue::Zero);
        }
        assert_eq!(final_value_error(&tf3, 3.0, 4).unwrap(), FinalValue::Finite(0.75));
        assert_eq!(final_value_error(&tf3, 3.0, 5).unwrap(), FinalValue::Unbounded);
        assert!(final_value_error(&tf3, 3.0, 0).is_err());
    }

    #[test]
    fn butterworth_poles() {
        let tf = TransferFunction::new(vec![2.0, 2.0, 1.0]).unwrap();
        assert_eq!(tf.type_order(), 3);
        let mut poles = tf.closed_loop_poles();
        poles.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((poles[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!((poles[1].re + 0.5).abs() < 1e-12 && (poles[1].im.abs() - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((tf.slowest_time_constant() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn horizon_is_at_least_forty_time_constants() {
        let tf = TransferFunction::new(vec![1.0]).unwrap();
        assert_eq!(default_horizon(&tf, 0, WINDOW_FRACTION), 40.0);
        assert_eq!(default_horizon(&tf, 2, WINDOW_FRACTION), 40.0);
        let longer = default_horizon(&tf, 1, WINDOW_FRACTION);
        assert!(longer > 40.0);
        assert!((-0.2 * longer).exp() * longer <= 1e-3);
    }
}
