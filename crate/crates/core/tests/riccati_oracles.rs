use nalgebra::DMatrix;
use smoothtype_core::analysis::steady_transfer;
use smoothtype_core::riccati::{integrate_riccati, steady_state_covariance, steady_state_from};
use smoothtype_core::{build_companion, IntegratorModel, TimeGrid};

fn model(n: usize, sigma: f64, rho: f64) -> smoothtype_core::GeneralLinearModel {
    build_companion(&IntegratorModel::new(n, sigma, rho).unwrap())
}

#[test]
fn scalar_steady_covariance_is_sigma_rho() {
    for sigma in [0.5, 1.0, 2.0] {
        for rho in [0.5, 1.0, 2.0] {
            let p = steady_state_covariance(&model(1, sigma, rho), 1e-10).unwrap();
            assert!((p[(0, 0)] - sigma * rho).abs() < 1e-6 * sigma * rho, "σ={sigma} ρ={rho}");
        }
    }
}

/// Newton iteration with a finite-difference Jacobian on the three unknowns of
/// the 2x2 algebraic equation for the double integrator with σ = ρ = 1:
/// `2 p12 − p11² = 0`, `p22 − p11 p12 = 0`, `1 − p12² = 0`.
fn brute_force_double_integrator() -> [f64; 3] {
    let f = |p: [f64; 3]| [2.0 * p[1] - p[0] * p[0], p[2] - p[0] * p[1], 1.0 - p[1] * p[1]];
    let mut p = [1.0, 0.5, 1.0];
    for _ in 0..100 {
        let r = f(p);
        let mut jac = DMatrix::zeros(3, 3);
        for j in 0..3 {
            let mut q = p;
            let h = 1e-7;
            q[j] += h;
            let rq = f(q);
            for i in 0..3 {
                jac[(i, j)] = (rq[i] - r[i]) / h;
            }
        }
        let step = jac.lu().solve(&nalgebra::DVector::from_row_slice(&r)).unwrap();
        for i in 0..3 {
            p[i] -= step[i];
        }
    }
    p
}

#[test]
fn double_integrator_gains_match_algebraic_oracle() {
    let [p11, p12, _] = brute_force_double_integrator();
    assert!((p11 - 2f64.sqrt()).abs() < 1e-9 && (p12 - 1.0).abs() < 1e-9);
    let im = IntegratorModel::new(2, 1.0, 1.0).unwrap();
    let grid = TimeGrid::covering(50.0, 1e-3).unwrap();
    let schedule = integrate_riccati(&build_companion(&im), &DMatrix::identity(2, 2), &grid).unwrap();
    let k = schedule.gains().last().unwrap();
    assert!((k[(0, 0)] - p11).abs() < 1e-4);
    assert!((k[(1, 0)] - p12).abs() < 1e-4);
    let tf = steady_transfer(schedule.steady_state().unwrap(), &im).unwrap();
    assert_eq!(tf.type_order(), 2);
    assert!((tf.numerator()[0] - p11).abs() < 1e-4 && (tf.numerator()[1] - p12).abs() < 1e-4);
}

#[test]
fn fourth_order_convergence_on_scalar_solution() {
    // ṗ = 1 − p², p(0) = ½  →  p(t) = tanh(t + atanh ½)
    let m = model(1, 1.0, 1.0);
    let exact = (2.0 + 0.5f64.atanh()).tanh();
    let err = |dt: f64, steps: usize| {
        let grid = TimeGrid::new(0.0, dt, steps).unwrap();
        let s = integrate_riccati(&m, &DMatrix::from_element(1, 1, 0.5), &grid).unwrap();
        (s.covariances().last().unwrap()[(0, 0)] - exact).abs()
    };
    let ratio = err(0.1, 20) / err(0.05, 40);
    assert!((ratio - 16.0).abs() < 0.2 * 16.0, "ratio {ratio}");
}

#[test]
fn steady_state_is_independent_of_the_start() {
    let tol = 1e-10;
    for n in 1..=3 {
        for sigma in [0.5, 1.0, 2.0] {
            for rho in [0.5, 1.0, 2.0] {
                let m = model(n, sigma, rho);
                let from_i = steady_state_from(&m, &DMatrix::identity(n, n), tol).unwrap();
                let from_5i = steady_state_from(&m, &(DMatrix::identity(n, n) * 5.0), tol).unwrap();
                let gap = (&from_i - &from_5i).amax();
                assert!(gap < 10.0 * tol, "n={n} σ={sigma} ρ={rho} gap={gap:e}");
            }
        }
    }
}
