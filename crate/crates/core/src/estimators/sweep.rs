use nalgebra::{DMatrix, DVector};

use super::{check_finite, Estimate, FilterRun, SmootherMethod, SmootherRun};
use crate::statespace::GeneralLinearModel;
use crate::{Error, Result};

struct Backward<'a> {
    a: &'a DMatrix<f64>,
    q: &'a DMatrix<f64>,
    diff: DVector<f64>,
    pulled: DVector<f64>,
}

impl Backward<'_> {
    /// `out = A xs + G Gᵀ P⁻¹ (xs − xf)`
    fn eval(&mut self, out: &mut DVector<f64>, xs: &DVector<f64>, p_inv: &DMatrix<f64>, xf: &DVector<f64>) {
        self.diff.copy_from(xs);
        self.diff -= xf;
        self.pulled.gemv(1.0, p_inv, &self.diff, 0.0);
        out.gemv(1.0, self.a, xs, 0.0);
        out.gemv(1.0, self.q, &self.pulled, 1.0);
    }
}

/// Fixed-interval smoother obtained by integrating
/// `dx̂(t|T)/dt = A x̂(t|T) + G Gᵀ P⁻¹(t) [x̂(t|T) − x̂(t)]`
/// backward from `x̂(T|T) = x̂(T)` with RK4 on the filter's grid.
///
/// The filter estimate between nodes is the cubic Hermite interpolant built
/// from its node values and derivatives.
pub fn sweep_smoother(model: &GeneralLinearModel, filt: &FilterRun) -> Result<SmootherRun> {
    let n = model.state_dim();
    let grid = *filt.grid();
    let xf = filt.states();
    if xf[0].len() != n {
        return Err(Error::contract("filter run does not match the model dimension"));
    }
    let table = filt.schedule().inverses()?;
    let dt = grid.dt();
    let mut backward = Backward {
        a: model.a(),
        q: model.driving_intensity(),
        diff: DVector::zeros(n),
        pulled: DVector::zeros(n),
    };

    let steps = grid.steps();
    let mut out = vec![DVector::zeros(n); grid.len()];
    out[steps] = xf[steps].clone();
    let (mut k1, mut k2, mut k3, mut k4) =
        (DVector::zeros(n), DVector::zeros(n), DVector::zeros(n), DVector::zeros(n));
    let mut probe = DVector::zeros(n);
    let mut xf_mid = DVector::zeros(n);
    let mut x = xf[steps].clone();
    for i in (0..steps).rev() {
        xf_mid.copy_from(&xf[i]);
        xf_mid += &xf[i + 1];
        xf_mid *= 0.5;
        xf_mid.axpy(dt / 8.0, &filt.xdot[i], 1.0);
        xf_mid.axpy(-dt / 8.0, &filt.xdot[i + 1], 1.0);

        backward.eval(&mut k1, &x, &table.nodes[i + 1], &xf[i + 1]);
        probe.copy_from(&x);
        probe.axpy(-0.5 * dt, &k1, 1.0);
        backward.eval(&mut k2, &probe, &table.mids[i], &xf_mid);
        probe.copy_from(&x);
        probe.axpy(-0.5 * dt, &k2, 1.0);
        backward.eval(&mut k3, &probe, &table.mids[i], &xf_mid);
        probe.copy_from(&x);
        probe.axpy(-dt, &k3, 1.0);
        backward.eval(&mut k4, &probe, &table.nodes[i], &xf[i]);

        k2 += &k3;
        k1.axpy(2.0, &k2, 1.0);
        k1 += &k4;
        x.axpy(-dt / 6.0, &k1, 1.0);
        check_finite(i, &x)?;
        out[i].copy_from(&x);
    }

    Ok(SmootherRun { grid, xhat_t: out, method: SmootherMethod::Sweep, warning: None })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::estimators::{kalman_filter, MeasurementSeries};
    use crate::riccati::integrate_riccati;
    use crate::statespace::{build_companion, IntegratorModel, TimeGrid};

    #[test]
    fn tracked_constant_is_left_alone() {
        let grid = TimeGrid::new(0.0, 1e-2, 400).unwrap();
        let model = build_companion(&IntegratorModel::new(1, 1.0, 1.0).unwrap());
        let schedule = Arc::new(integrate_riccati(&model, &DMatrix::identity(1, 1), &grid).unwrap());
        let meas = MeasurementSeries::scalar(grid, &vec![-3.0; grid.len()]).unwrap();
        let filt = kalman_filter(&model, &schedule, &meas, &DVector::from_element(1, -3.0)).unwrap();
        let smooth = sweep_smoother(&model, &filt).unwrap();
        assert_eq!(smooth.method(), SmootherMethod::Sweep);
        assert!(smooth.states().iter().all(|x| x[0] == -3.0));
    }

    #[test]
    fn terminal_value_equals_filter() {
        let grid = TimeGrid::new(0.0, 1e-2, 300).unwrap();
        let model = build_companion(&IntegratorModel::new(2, 1.0, 1.0).unwrap());
        let schedule = Arc::new(integrate_riccati(&model, &DMatrix::identity(2, 2), &grid).unwrap());
        let y: Vec<f64> = (0..grid.len()).map(|i| (grid.time(i) * 0.7).sin()).collect();
        let meas = MeasurementSeries::scalar(grid, &y).unwrap();
        let filt = kalman_filter(&model, &schedule, &meas, &DVector::zeros(2)).unwrap();
        let smooth = sweep_smoother(&model, &filt).unwrap();
        assert_eq!(smooth.states().last(), filt.states().last());
    }

    #[test]
    fn ill_conditioned_schedule_is_rejected() {
        let grid = TimeGrid::new(0.0, 1e-3, 5).unwrap();
        let model = build_companion(&IntegratorModel::new(2, 1.0, 1.0).unwrap());
        let p0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        let schedule = Arc::new(integrate_riccati(&model, &p0, &grid).unwrap());
        let meas = MeasurementSeries::scalar(grid, &vec![0.0; grid.len()]).unwrap();
        let filt = kalman_filter(&model, &schedule, &meas, &DVector::zeros(2)).unwrap();
        assert!(matches!(
            sweep_smoother(&model, &filt),
            Err(Error::SingularCovariance { index: 0, .. })
        ));
    }
}
