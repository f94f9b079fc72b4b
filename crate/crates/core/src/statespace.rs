//! Signal/measurement models and the uniform time grid shared by all series.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// The n-th order integrator model `x^(n) = sigma * w'`, `y = x + rho * v'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorModel {
    n: usize,
    sigma: f64,
    rho: f64,
}

impl IntegratorModel {
    pub fn new(n: usize, sigma: f64, rho: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("model order n must be at least 1"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::contract(format!("sigma must be finite and > 0, got {sigma}")));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::contract(format!("rho must be finite and > 0, got {rho}")));
        }
        Ok(Self { n, sigma, rho })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// `x' = A x + G w'`, `y = H x + B v'` with `w`, `v` independent Brownian motions.
///
/// The products `G Gᵀ`, `(B Bᵀ)⁻¹` and `Hᵀ (B Bᵀ)⁻¹ H` are computed once at
/// construction since every estimator uses them.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralLinearModel {
    a: DMatrix<f64>,
    g: DMatrix<f64>,
    h: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    s: DMatrix<f64>,
}

impl GeneralLinearModel {
    pub fn new(a: DMatrix<f64>, g: DMatrix<f64>, h: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::contract(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        if g.nrows() != n || g.ncols() == 0 {
            return Err(Error::contract(format!("G must be {n}xq, got {}x{}", g.nrows(), g.ncols())));
        }
        let p = h.nrows();
        if p == 0 || h.ncols() != n {
            return Err(Error::contract(format!("H must be px{n}, got {}x{}", h.nrows(), h.ncols())));
        }
        if b.nrows() != p || b.ncols() != p {
            return Err(Error::contract(format!("B must be {p}x{p}, got {}x{}", b.nrows(), b.ncols())));
        }
        let all = [&a, &g, &h, &b];
        if all.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::contract("model matrices must be finite"));
        }
        let r = &b * b.transpose();
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::contract("B Bᵀ is not symmetric positive definite"))?;
        let r_inv = chol.inverse();
        let q = &g * g.transpose();
        let s = h.transpose() * &r_inv * &h;
        Ok(Self { a, g, h, b, q, r_inv, s })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `G Gᵀ`
    pub fn driving_intensity(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `(B Bᵀ)⁻¹`
    pub fn measurement_precision(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    /// `Hᵀ (B Bᵀ)⁻¹ H`
    pub fn information(&self) -> &DMatrix<f64> {
        &self.s
    }
}

/// Companion-form realization of the integrator chain: `A` has ones on the
/// superdiagonal, `G = sigma * b` with `b = e_n`, `H = e_1ᵀ`, `B = [rho]`.
pub fn build_companion(model: &IntegratorModel) -> GeneralLinearModel {
    let n = model.n();
    let a = DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let mut g = DMatrix::zeros(n, 1);
    g[(n - 1, 0)] = model.sigma();
    let mut h = DMatrix::zeros(1, n);
    h[(0, 0)] = 1.0;
    let b = DMatrix::from_element(1, 1, model.rho());
    GeneralLinearModel::new(a, g, h, b).expect("integrator model invariants imply a valid companion form")
}

/// Uniform grid `t0, t0 + dt, ..., t0 + steps * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::contract("grid start must be finite"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::contract(format!("grid step must be finite and > 0, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::contract("grid must have at least one step"));
        }
        Ok(Self { t0, dt, steps })
    }

    /// Grid on `[0, t_end]` with the step count rounded up so the horizon is at least `t_end`.
    pub fn covering(t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::contract(format!("horizon must be finite and > 0, got {t_end}")));
        }
        let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
        Self::new(0.0, dt, steps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of samples, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }
}

pub fn grid_times(grid: &TimeGrid) -> Vec<f64> {
    (0..grid.len()).map(|i| grid.time(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_companion() {
        let m = build_companion(&IntegratorModel::new(1, 1.0, 1.0).unwrap());
        assert_eq!(m.a(), &DMatrix::from_element(1, 1, 0.0));
        assert_eq!(m.g(), &DMatrix::from_element(1, 1, 1.0));
        assert_eq!(m.h(), &DMatrix::from_element(1, 1, 1.0));
        assert_eq!(m.b(), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn second_order_companion() {
        let m = build_companion(&IntegratorModel::new(2, 1.0, 1.0).unwrap());
        assert_eq!(m.a(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(m.g().as_slice(), &[0.0, 1.0]);
        assert_eq!(m.h().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn third_order_superdiagonal() {
        let m = build_companion(&IntegratorModel::new(3, 0.7, 2.0).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if (i, j) == (0, 1) || (i, j) == (1, 2) { 1.0 } else { 0.0 };
                assert_eq!(m.a()[(i, j)], expect);
            }
        }
        assert_eq!(m.g().as_slice(), &[0.0, 0.0, 0.7]);
        assert_eq!(m.b()[(0, 0)], 2.0);
    }

    #[test]
    fn companion_is_nilpotent_and_chain_observable() {
        for n in 1..=6 {
            let m = build_companion(&IntegratorModel::new(n, 1.0, 1.0).unwrap());
            let a = m.a();
            let mut power = DMatrix::<f64>::identity(n, n);
            let mut b = DMatrix::zeros(n, 1);
            b[(n - 1, 0)] = 1.0;
            for k in 0..n {
                let chain = (m.h() * &power * &b)[(0, 0)];
                assert_eq!(chain, if k == n - 1 { 1.0 } else { 0.0 }, "n={n} k={k}");
                power = &power * a;
            }
            assert!(power.iter().all(|v| *v == 0.0), "A^{n} != 0");
        }
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(IntegratorModel::new(0, 1.0, 1.0).is_err());
        assert!(IntegratorModel::new(1, 0.0, 1.0).is_err());
        assert!(IntegratorModel::new(1, 1.0, -1.0).is_err());
        let a = DMatrix::zeros(2, 2);
        let g = DMatrix::zeros(2, 1);
        let h = DMatrix::zeros(1, 2);
        assert!(GeneralLinearModel::new(a.clone(), g.clone(), h.clone(), DMatrix::zeros(1, 1)).is_err());
        assert!(GeneralLinearModel::new(a, g, DMatrix::zeros(1, 3), DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn grid_examples() {
        assert_eq!(grid_times(&TimeGrid::new(0.0, 0.5, 2).unwrap()), vec![0.0, 0.5, 1.0]);
        assert_eq!(
            grid_times(&TimeGrid::new(1.0, 0.25, 4).unwrap()),
            vec![1.0, 1.25, 1.5, 1.75, 2.0]
        );
        let t = grid_times(&TimeGrid::new(0.0, 1e-3, 1000).unwrap());
        assert_eq!(t.len(), 1001);
        assert!((t[1000] - 1.0).abs() < 1e-12);
        assert!(TimeGrid::new(0.0, 0.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn grid_is_uniform(t0 in -100.0..100.0f64, dt in 1e-4..1.0f64, steps in 1usize..5000) {
            let grid = TimeGrid::new(t0, dt, steps).unwrap();
            let t = grid_times(&grid);
            prop_assert_eq!(t.len(), steps + 1);
            let scale = t0.abs().max(dt * steps as f64).max(1.0);
            for w in t.windows(2) {
                prop_assert!(w[1] > w[0]);
                prop_assert!(((w[1] - w[0]) - dt).abs() <= 1e-12 * scale);
            }
        }
    }
}
