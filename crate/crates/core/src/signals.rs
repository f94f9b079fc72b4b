//! True-state trajectories and measurements for integrator models driven by a
//! polynomial drift `a tᵐ / m!` and, optionally, Brownian noise.
//!
//! Time in the drift is measured from the grid start, and all trajectories
//! start from the zero state.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::estimators::MeasurementSeries;
use crate::statespace::{IntegratorModel, TimeGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialDrift {
    a: f64,
    m: u32,
}

impl PolynomialDrift {
    pub fn new(a: f64, m: u32) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::contract("drift amplitude must be finite"));
        }
        Ok(Self { a, m })
    }

    pub fn none() -> Self {
        Self { a: 0.0, m: 0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn m(&self) -> u32 {
        self.m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRun {
    grid: TimeGrid,
    x_true: Vec<DVector<f64>>,
    y: MeasurementSeries,
    seed: Option<u64>,
}

impl SignalRun {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `x̃` and its first `n − 1` derivatives at every node.
    pub fn states(&self) -> &[DVector<f64>] {
        &self.x_true
    }

    pub fn measurements(&self) -> &MeasurementSeries {
        &self.y
    }

    /// `None` for noiseless runs.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// `a τᵖ / p!` evaluated by running products so large `p` does not overflow early.
fn scaled_power(a: f64, tau: f64, p: u32) -> f64 {
    (1..=p).fold(a, |acc, j| acc * tau / j as f64)
}

fn drift_state(n: usize, drift: &PolynomialDrift, tau: f64) -> DVector<f64> {
    let top = drift.m + n as u32;
    DVector::from_fn(n, |k, _| scaled_power(drift.a, tau, top - k as u32))
}

/// Closed-form solution of `x̃⁽ⁿ⁾ = a tᵐ/m!` from rest; component `k` (0-based)
/// is `a t^(m+n−k) / (m+n−k)!`. Measurements equal `x̃` exactly.
pub fn noiseless_signal(model: &IntegratorModel, drift: &PolynomialDrift, grid: &TimeGrid) -> SignalRun {
    let n = model.n();
    let x_true: Vec<_> = (0..grid.len())
        .map(|i| drift_state(n, drift, i as f64 * grid.dt()))
        .collect();
    let y = x_true.iter().map(|x| DVector::from_element(1, x[0])).collect();
    SignalRun {
        grid: *grid,
        y: MeasurementSeries::new(*grid, y).expect("closed-form samples are finite"),
        x_true,
        seed: None,
    }
}

/// Noisy path of `x̃⁽ⁿ⁾ = a tᵐ/m! + σ w'`, `y = x̃ + ρ v'`.
///
/// The drift response is the exact polynomial of [`noiseless_signal`]; the
/// noise response is Euler-Maruyama on the companion chain,
/// `x_{i+1} = x_i + dt A x_i + σ √dt ξ_i b`, and measurement samples are
/// `y_i = x̃_i + ρ η_i / √dt`. A single ChaCha8 stream seeded with `seed`
/// supplies the draws in the order `η_0, ξ_0, η_1, ξ_1, η_2, ...`: one driving
/// draw then one measurement draw for every step.
pub fn stochastic_signal(
    model: &IntegratorModel,
    drift: &PolynomialDrift,
    grid: &TimeGrid,
    seed: u64,
) -> SignalRun {
    let n = model.n();
    let dt = grid.dt();
    let drive = model.sigma() * dt.sqrt();
    let meas = model.rho() / dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut noise = DVector::<f64>::zeros(n);
    let mut x_true = Vec::with_capacity(grid.len());
    let mut y = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        if i > 0 {
            let xi: f64 = rng.sample(StandardNormal);
            // x += dt A x with A the superdiagonal shift; ascending order reads old values.
            for k in 0..n - 1 {
                noise[k] += dt * noise[k + 1];
            }
            noise[n - 1] += drive * xi;
        }
        let eta: f64 = rng.sample(StandardNormal);
        let state = drift_state(n, drift, i as f64 * dt) + &noise;
        y.push(DVector::from_element(1, state[0] + meas * eta));
        x_true.push(state);
    }
    SignalRun {
        grid: *grid,
        y: MeasurementSeries::new(*grid, y).expect("gaussian samples are finite"),
        x_true,
        seed: Some(seed),
    }
}
