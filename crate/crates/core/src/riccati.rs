//! Filter covariance propagation: the Riccati ODE, its steady state, and the
//! Kalman gain schedule consumed by the estimators.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::statespace::{GeneralLinearModel, TimeGrid};
use crate::{Error, Result};

/// Step-to-step max-abs change below which the covariance counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-10;
/// Hard cap on integration steps when searching for the steady state.
pub const MAX_STEADY_STEPS: usize = 10_000_000;
/// Condition number above which a covariance is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// `A P + P Aᵀ + G Gᵀ − P Hᵀ (B Bᵀ)⁻¹ H P`
pub fn riccati_rhs(model: &GeneralLinearModel, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = model.state_dim();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::contract(format!(
            "covariance must be {n}x{n}, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    Ok(rhs(model, p))
}

fn rhs(model: &GeneralLinearModel, p: &DMatrix<f64>) -> DMatrix<f64> {
    let ap = model.a() * p;
    let psp = p * model.information() * p;
    &ap + ap.transpose() + model.driving_intensity() - psp
}

fn rk4_step(model: &GeneralLinearModel, p: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let k1 = rhs(model, p);
    let k2 = rhs(model, &(p + &k1 * (0.5 * dt)));
    let k3 = rhs(model, &(p + &k2 * (0.5 * dt)));
    let k4 = rhs(model, &(p + &k3 * dt));
    symmetrize(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    (&p + p.transpose()) * 0.5
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn min_eigenvalue(p: &DMatrix<f64>) -> f64 {
    p.clone().symmetric_eigenvalues().min()
}

/// Covariance and gain on every grid node, with cubic-Hermite midpoint values
/// for the fourth-order estimator steps.
#[derive(Debug)]
pub struct CovarianceSchedule {
    grid: TimeGrid,
    p: Vec<DMatrix<f64>>,
    k: Vec<DMatrix<f64>>,
    p_mid: Vec<DMatrix<f64>>,
    k_mid: Vec<DMatrix<f64>>,
    p_inf: Option<DMatrix<f64>>,
    converged_at: Option<usize>,
    inverses: OnceLock<Result<InverseTable>>,
}

/// `P⁻¹` at nodes and interval midpoints.
#[derive(Debug)]
pub(crate) struct InverseTable {
    pub nodes: Vec<DMatrix<f64>>,
    pub mids: Vec<DMatrix<f64>>,
}

impl CovarianceSchedule {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.p
    }

    pub fn gains(&self) -> &[DMatrix<f64>] {
        &self.k
    }

    /// Covariance halfway through interval `i` (between nodes `i` and `i + 1`).
    pub fn midpoint_covariances(&self) -> &[DMatrix<f64>] {
        &self.p_mid
    }

    pub fn midpoint_gains(&self) -> &[DMatrix<f64>] {
        &self.k_mid
    }

    pub fn steady_state(&self) -> Option<&DMatrix<f64>> {
        self.p_inf.as_ref()
    }

    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    pub(crate) fn inverses(&self) -> Result<&InverseTable> {
        match self.inverses.get_or_init(|| self.build_inverses()) {
            Ok(t) => Ok(t),
            Err(e) => Err(e.clone()),
        }
    }

    fn build_inverses(&self) -> Result<InverseTable> {
        let invert = |index: usize, p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let eig = p.clone().symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if !(condition <= MAX_CONDITION) {
                return Err(Error::SingularCovariance { index, condition });
            }
            p.clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or(Error::SingularCovariance { index, condition })
        };
        let nodes = self
            .p
            .iter()
            .enumerate()
            .map(|(i, p)| invert(i, p))
            .collect::<Result<Vec<_>>>()?;
        let mids = self
            .p_mid
            .iter()
            .enumerate()
            .map(|(i, p)| invert(i, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(InverseTable { nodes, mids })
    }
}

/// Fixed-step RK4 integration of the Riccati ODE from `p0` across `grid`.
pub fn integrate_riccati(
    model: &GeneralLinearModel,
    p0: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<CovarianceSchedule> {
    integrate_riccati_with_tol(model, p0, grid, CONVERGENCE_TOL)
}

pub fn integrate_riccati_with_tol(
    model: &GeneralLinearModel,
    p0: &DMatrix<f64>,
    grid: &TimeGrid,
    tol: f64,
) -> Result<CovarianceSchedule> {
    let n = model.state_dim();
    if p0.nrows() != n || p0.ncols() != n {
        return Err(Error::contract(format!("initial covariance must be {n}x{n}")));
    }
    if p0.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("initial covariance must be finite"));
    }
    if max_abs(&(p0 - p0.transpose())) > 1e-10 * max_abs(p0).max(1.0) {
        return Err(Error::contract("initial covariance must be symmetric"));
    }
    if !(tol > 0.0) {
        return Err(Error::contract("convergence tolerance must be > 0"));
    }
    let p0 = symmetrize(p0.clone());
    let eigenvalue = min_eigenvalue(&p0);
    if !(eigenvalue > 0.0) {
        return Err(Error::NotPositiveDefinite { eigenvalue });
    }

    let dt = grid.dt();
    let gain_map = model.h().transpose() * model.measurement_precision();
    let mut p = Vec::with_capacity(grid.len());
    let mut p_dot = Vec::with_capacity(grid.len());
    let mut converged_at = None;
    p_dot.push(rhs(model, &p0));
    p.push(p0);
    for i in 0..grid.steps() {
        let next = rk4_step(model, &p[i], dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { index: i + 1 });
        }
        if converged_at.is_none() && max_abs(&(&next - &p[i])) < tol {
            converged_at = Some(i + 1);
        }
        p_dot.push(rhs(model, &next));
        p.push(next);
    }

    let p_mid: Vec<_> = (0..grid.steps())
        .map(|i| {
            let hermite = (&p[i] + &p[i + 1]) * 0.5 + (&p_dot[i] - &p_dot[i + 1]) * (dt / 8.0);
            symmetrize(hermite)
        })
        .collect();
    let k = p.iter().map(|pi| pi * &gain_map).collect();
    let k_mid = p_mid.iter().map(|pi| pi * &gain_map).collect();

    let p_inf = converged_at.and_then(|_| {
        let polished = polish(model, p.last().expect("grid has nodes"));
        (max_abs(&rhs(model, &polished)) < tol).then_some(polished)
    });

    Ok(CovarianceSchedule {
        grid: *grid,
        p,
        k,
        p_mid,
        k_mid,
        p_inf,
        converged_at,
        inverses: OnceLock::new(),
    })
}

/// Long-horizon limit of the Riccati ODE started from the identity.
///
/// Integration stops once successive RK4 steps differ by less than `tol`; the
/// result is then refined with Newton-Kleinman iterations on the algebraic
/// equation, which only ever replaces it when the residual drops.
pub fn steady_state_covariance(model: &GeneralLinearModel, tol: f64) -> Result<DMatrix<f64>> {
    let n = model.state_dim();
    steady_state_from(model, &DMatrix::identity(n, n), tol)
}

pub fn steady_state_from(model: &GeneralLinearModel, p0: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !(tol > 0.0) {
        return Err(Error::contract("tolerance must be > 0"));
    }
    let eigenvalue = min_eigenvalue(p0);
    if !(eigenvalue > 0.0) {
        return Err(Error::NotPositiveDefinite { eigenvalue });
    }
    // Time scale of the Riccati flow: the rate at which P S P responds to P.
    let rate = (max_abs(model.driving_intensity()) * max_abs(model.information()))
        .sqrt()
        .max(max_abs(model.a()))
        .max(1e-12);
    let dt = (0.05 / rate).min(1e-2);

    let mut p = symmetrize(p0.clone());
    let mut change = f64::INFINITY;
    let mut steps = 0;
    while change >= tol {
        if steps >= MAX_STEADY_STEPS {
            return Err(Error::NonConvergence { iterations: steps, residual: change });
        }
        let next = rk4_step(model, &p, dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { index: steps + 1 });
        }
        change = max_abs(&(&next - &p));
        p = next;
        steps += 1;
    }
    Ok(polish(model, &p))
}

/// Newton-Kleinman refinement of an approximate stabilizing solution.
fn polish(model: &GeneralLinearModel, start: &DMatrix<f64>) -> DMatrix<f64> {
    let n = model.state_dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut best = start.clone();
    let mut best_residual = max_abs(&rhs(model, start));
    let mut p = start.clone();
    for _ in 0..30 {
        if best_residual == 0.0 {
            break;
        }
        let closed = model.a() - &p * model.information();
        let forcing = -(model.driving_intensity() + &p * model.information() * &p);
        let lyapunov = eye.kronecker(&closed) + closed.kronecker(&eye);
        let Some(vec_x) = lyapunov.lu().solve(&DMatrix::from_column_slice(n * n, 1, forcing.as_slice())) else {
            break;
        };
        p = symmetrize(DMatrix::from_column_slice(n, n, vec_x.as_slice()));
        let residual = max_abs(&rhs(model, &p));
        if !residual.is_finite() || residual >= best_residual {
            break;
        }
        best = p.clone();
        best_residual = residual;
    }
    best
}
