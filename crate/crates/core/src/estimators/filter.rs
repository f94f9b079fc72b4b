use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_finite, Estimate, MeasurementSeries, Subject};
use crate::riccati::CovarianceSchedule;
use crate::statespace::{GeneralLinearModel, TimeGrid};
use crate::{Error, Result};

/// Causal estimate `x̂(t)` together with the schedule that produced it.
#[derive(Debug, Clone)]
pub struct FilterRun {
    grid: TimeGrid,
    xhat: Vec<DVector<f64>>,
    /// `dx̂/dt` at each node, kept for midpoint interpolation in the sweep.
    pub(crate) xdot: Vec<DVector<f64>>,
    schedule: Arc<CovarianceSchedule>,
}

impl FilterRun {
    pub fn schedule(&self) -> &Arc<CovarianceSchedule> {
        &self.schedule
    }

    pub fn derivatives(&self) -> &[DVector<f64>] {
        &self.xdot
    }
}

impl Estimate for FilterRun {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn states(&self) -> &[DVector<f64>] {
        &self.xhat
    }

    fn subject(&self) -> Subject {
        Subject::Filter
    }
}

struct Dynamics<'a> {
    a: &'a DMatrix<f64>,
    h: &'a DMatrix<f64>,
    innovation: DVector<f64>,
}

impl Dynamics<'_> {
    /// `out = A x + K (y − H x)`
    fn eval(&mut self, out: &mut DVector<f64>, x: &DVector<f64>, k: &DMatrix<f64>, y: &DVector<f64>) {
        out.gemv(1.0, self.a, x, 0.0);
        self.innovation.copy_from(y);
        self.innovation.gemv(-1.0, self.h, x, 1.0);
        out.gemv(1.0, k, &self.innovation, 1.0);
    }
}

/// Kalman-Bucy filter `dx̂ = A x̂ + K(t) (y − H x̂)` integrated forward with RK4,
/// using the schedule's node and midpoint gains.
pub fn kalman_filter(
    model: &GeneralLinearModel,
    schedule: &Arc<CovarianceSchedule>,
    meas: &MeasurementSeries,
    x0: &DVector<f64>,
) -> Result<FilterRun> {
    let grid = *meas.grid();
    if schedule.grid() != &grid {
        return Err(Error::GridMismatch("covariance schedule and measurements".into()));
    }
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::contract(format!("initial estimate must have length {n}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("initial estimate must be finite"));
    }
    if meas.dim() != model.meas_dim() {
        return Err(Error::contract(format!(
            "measurement dimension {} does not match model ({})",
            meas.dim(),
            model.meas_dim()
        )));
    }

    let dt = grid.dt();
    let y = meas.samples();
    let y_mid = meas.midpoints();
    let k = schedule.gains();
    let k_mid = schedule.midpoint_gains();
    let mut dynamics = Dynamics { a: model.a(), h: model.h(), innovation: DVector::zeros(model.meas_dim()) };

    let mut xhat = Vec::with_capacity(grid.len());
    let mut xdot = Vec::with_capacity(grid.len());
    let (mut k1, mut k2, mut k3, mut k4) =
        (DVector::zeros(n), DVector::zeros(n), DVector::zeros(n), DVector::zeros(n));
    let mut probe = DVector::zeros(n);
    let mut x = x0.clone();
    for i in 0..grid.steps() {
        dynamics.eval(&mut k1, &x, &k[i], &y[i]);
        probe.copy_from(&x);
        probe.axpy(0.5 * dt, &k1, 1.0);
        dynamics.eval(&mut k2, &probe, &k_mid[i], &y_mid[i]);
        probe.copy_from(&x);
        probe.axpy(0.5 * dt, &k2, 1.0);
        dynamics.eval(&mut k3, &probe, &k_mid[i], &y_mid[i]);
        probe.copy_from(&x);
        probe.axpy(dt, &k3, 1.0);
        dynamics.eval(&mut k4, &probe, &k[i + 1], &y[i + 1]);

        xhat.push(x.clone());
        xdot.push(k1.clone());
        k2 += &k3;
        k1.axpy(2.0, &k2, 1.0);
        k1 += &k4;
        x.axpy(dt / 6.0, &k1, 1.0);
        check_finite(i + 1, &x)?;
    }
    let last = grid.steps();
    dynamics.eval(&mut k1, &x, &k[last], &y[last]);
    xdot.push(k1);
    xhat.push(x);

    Ok(FilterRun { grid, xhat, xdot, schedule: Arc::clone(schedule) })
}
