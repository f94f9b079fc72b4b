#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use smoothtype_core::analysis::{default_horizon, steady_transfer, WINDOW_FRACTION};
use smoothtype_core::estimators::{el_tpbvp_solve, kalman_filter, sweep_smoother, FilterRun, SmootherRun};
use smoothtype_core::riccati::{integrate_riccati, steady_state_covariance};
use smoothtype_core::signals::{noiseless_signal, stochastic_signal, PolynomialDrift, SignalRun};
use smoothtype_core::{build_companion, IntegratorModel, TimeGrid};

pub struct Experiment {
    pub truth: SignalRun,
    pub filter: FilterRun,
    pub sweep: SmootherRun,
    pub tpbvp: SmootherRun,
    pub adjoint: Vec<DVector<f64>>,
}

pub fn horizon(n: usize, m: u32, sigma: f64, rho: f64) -> f64 {
    let im = IntegratorModel::new(n, sigma, rho).unwrap();
    let p_inf = steady_state_covariance(&build_companion(&im), 1e-10).unwrap();
    default_horizon(&steady_transfer(&p_inf, &im).unwrap(), m, WINDOW_FRACTION)
}

pub fn run(n: usize, m: u32, a: f64, sigma: f64, rho: f64, t_end: f64, seed: Option<u64>) -> Experiment {
    let im = IntegratorModel::new(n, sigma, rho).unwrap();
    let model = build_companion(&im);
    let grid = TimeGrid::covering(t_end, 1e-3).unwrap();
    let drift = PolynomialDrift::new(a, m).unwrap();
    let truth = match seed {
        Some(s) => stochastic_signal(&im, &drift, &grid, s),
        None => noiseless_signal(&im, &drift, &grid),
    };
    let p0 = DMatrix::identity(n, n);
    let x0 = DVector::zeros(n);
    let schedule = Arc::new(integrate_riccati(&model, &p0, &grid).unwrap());
    let filter = kalman_filter(&model, &schedule, truth.measurements(), &x0).unwrap();
    let sweep = sweep_smoother(&model, &filter).unwrap();
    let (tpbvp, adjoint) = el_tpbvp_solve(&model, truth.measurements(), &x0, Some(&p0)).unwrap();
    Experiment { truth, filter, sweep, tpbvp, adjoint: adjoint.values().to_vec() }
}

pub fn max_scaled_gap(a: &[DVector<f64>], b: &[DVector<f64>], truth: &SignalRun) -> f64 {
    let scale = truth.states().iter().map(|x| x[0].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x[0] - y[0]).abs()).fold(0.0, f64::max) / scale
}
