use nalgebra::{DMatrix, DVector};

use super::banded::BandedMatrix;
use super::{MeasurementSeries, SmootherMethod, SmootherRun};
use crate::statespace::{GeneralLinearModel, TimeGrid};
use crate::{Error, Result};

/// Scaled residual of the discretized equations above which the run carries a warning.
pub const RESIDUAL_WARN: f64 = 1e-8;

/// Adjoint (Lagrange multiplier) trajectory `λ(t)`.
#[derive(Debug, Clone)]
pub struct AdjointSeries {
    grid: TimeGrid,
    lambda: Vec<DVector<f64>>,
}

impl AdjointSeries {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.lambda
    }
}

/// Solves the Euler-Lagrange boundary-value problem
///
/// ```text
/// dx̂/dt = A x̂ − ½ G Gᵀ λ
/// dλ/dt = −2 Hᵀ R⁻¹ H x̂ − Aᵀ λ + 2 Hᵀ R⁻¹ y,      R = B Bᵀ
/// ```
///
/// with `λ(T) = 0` and, at `t0`, either the hard condition `x̂(t0) = x0`
/// (`prior = None`) or the condition `x̂(t0) = x0 − ½ P0 λ(t0)` that comes
/// from adding the initial-state penalty `(z0 − x0)ᵀ P0⁻¹ (z0 − x0)` to the
/// cost (`prior = Some(P0)`). The latter is the problem a filter started at
/// `(x0, P0)` followed by the backward sweep solves.
///
/// Each interval is discretized by Hermite-Simpson collocation, which for a
/// linear system reduces to the (2,2) Padé approximant of the transition
/// matrix, and the whole block-banded system is solved directly.
pub fn el_tpbvp_solve(
    model: &GeneralLinearModel,
    meas: &MeasurementSeries,
    x0: &DVector<f64>,
    prior: Option<&DMatrix<f64>>,
) -> Result<(SmootherRun, AdjointSeries)> {
    let n = model.state_dim();
    if x0.len() != n || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract(format!("initial estimate must be a finite {n}-vector")));
    }
    if meas.dim() != model.meas_dim() {
        return Err(Error::contract("measurement dimension does not match the model"));
    }
    if let Some(p0) = prior {
        if p0.nrows() != n || p0.ncols() != n || p0.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!("prior covariance must be a finite {n}x{n} matrix")));
        }
    }

    let grid = *meas.grid();
    let dt = grid.dt();
    let steps = grid.steps();
    let m = 2 * n;

    // Hamiltonian system z = (x̂, λ): z' = L z + f(t).
    let mut l = DMatrix::<f64>::zeros(m, m);
    l.view_mut((0, 0), (n, n)).copy_from(model.a());
    l.view_mut((0, n), (n, n)).copy_from(&(model.driving_intensity() * -0.5));
    l.view_mut((n, 0), (n, n)).copy_from(&(model.information() * -2.0));
    l.view_mut((n, n), (n, n)).copy_from(&(-model.a().transpose()));
    let forcing_map = model.h().transpose() * model.measurement_precision() * 2.0;
    let forcing = |y: &DVector<f64>| -> DVector<f64> {
        let mut f = DVector::zeros(m);
        f.rows_mut(n, n).copy_from(&(&forcing_map * y));
        f
    };

    let eye = DMatrix::<f64>::identity(m, m);
    let l2 = &l * &l;
    let ahead = &eye - &l * (0.5 * dt) + &l2 * (dt * dt / 12.0);
    let behind = -(&eye + &l * (0.5 * dt) + &l2 * (dt * dt / 12.0));
    let y = meas.samples();
    let y_mid = meas.midpoints();
    let f_nodes: Vec<DVector<f64>> = y.iter().map(&forcing).collect();
    let interval_rhs = |i: usize| -> DVector<f64> {
        let f_mid = forcing(&y_mid[i]);
        (&f_nodes[i] + &f_nodes[i + 1] + f_mid * 4.0) * (dt / 6.0)
            + &l * (&f_nodes[i] - &f_nodes[i + 1]) * (dt * dt / 12.0)
    };

    // Unknowns: z_0, z_1, ..., z_N. Rows: initial condition (n), one block of
    // 2n per interval, terminal condition (n).
    let size = m * (steps + 1);
    let bw = 3 * n - 1;
    let mut band = BandedMatrix::zeros(size, bw, bw);
    let mut rhs = vec![0.0; size];

    for r in 0..n {
        band.set(r, r, 1.0);
        if let Some(p0) = prior {
            for c in 0..n {
                if p0[(r, c)] != 0.0 {
                    band.set(r, n + c, 0.5 * p0[(r, c)]);
                }
            }
        }
        rhs[r] = x0[r];
    }
    for i in 0..steps {
        let row0 = n + m * i;
        let col0 = m * i;
        for r in 0..m {
            for c in 0..m {
                if behind[(r, c)] != 0.0 {
                    band.set(row0 + r, col0 + c, behind[(r, c)]);
                }
                if ahead[(r, c)] != 0.0 {
                    band.set(row0 + r, col0 + m + c, ahead[(r, c)]);
                }
            }
        }
        let b = interval_rhs(i);
        rhs[row0..row0 + m].copy_from_slice(b.as_slice());
    }
    let row0 = n + m * steps;
    for r in 0..n {
        band.set(row0 + r, m * steps + n + r, 1.0);
    }

    let mut z = rhs;
    band.solve_in_place(&mut z)?;
    if let Some(bad) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::Diverged { index: bad / m });
    }

    let node = |i: usize| DVector::from_column_slice(&z[m * i..m * (i + 1)]);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..steps {
        let b = interval_rhs(i);
        let lhs = &behind * node(i) + &ahead * node(i + 1);
        worst = worst.max((lhs - &b).amax());
        scale = scale.max(b.amax()).max(node(i).amax());
    }
    let residual = worst / scale.max(f64::MIN_POSITIVE);
    let warning = (residual > RESIDUAL_WARN)
        .then(|| format!("scaled residual {residual:.3e} of the discretized equations exceeds {RESIDUAL_WARN:e}"));

    let xhat_t = (0..=steps).map(|i| DVector::from_column_slice(&z[m * i..m * i + n])).collect();
    let lambda = (0..=steps).map(|i| DVector::from_column_slice(&z[m * i + n..m * (i + 1)])).collect();
    Ok((
        SmootherRun { grid, xhat_t, method: SmootherMethod::ElTpbvp, warning },
        AdjointSeries { grid, lambda },
    ))
}
