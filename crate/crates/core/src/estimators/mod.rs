//! Causal filter, backward-sweep smoother and the Euler-Lagrange boundary-value
//! solver used to cross-check the sweep.
//!
//! Measurements are grid samples of a continuous signal. Between nodes the
//! signal is taken to be the local cubic through the four nearest samples, so
//! all three estimators integrate exactly the same input function and can be
//! compared sample by sample.

mod banded;
mod filter;
mod sweep;
mod tpbvp;

use std::fmt;

use nalgebra::DVector;

use crate::statespace::TimeGrid;
use crate::{Error, Result};

pub use filter::{kalman_filter, FilterRun};
pub use sweep::sweep_smoother;
pub use tpbvp::{el_tpbvp_solve, AdjointSeries, RESIDUAL_WARN};

/// Which estimator produced a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subject {
    Filter,
    Smoother,
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subject::Filter => "filter",
            Subject::Smoother => "smoother",
        })
    }
}

/// A state-estimate series on a grid.
pub trait Estimate {
    fn grid(&self) -> &TimeGrid;
    fn states(&self) -> &[DVector<f64>];
    fn subject(&self) -> Subject;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    grid: TimeGrid,
    y: Vec<DVector<f64>>,
}

impl MeasurementSeries {
    pub fn new(grid: TimeGrid, y: Vec<DVector<f64>>) -> Result<Self> {
        if y.len() != grid.len() {
            return Err(Error::contract(format!(
                "expected {} measurement samples, got {}",
                grid.len(),
                y.len()
            )));
        }
        let p = y[0].len();
        if p == 0 || y.iter().any(|v| v.len() != p) {
            return Err(Error::contract("measurement samples must share one non-zero dimension"));
        }
        if let Some(i) = y.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::contract(format!("measurement sample {i} is not finite")));
        }
        Ok(Self { grid, y })
    }

    /// Scalar measurements, one per node.
    pub fn scalar(grid: TimeGrid, y: &[f64]) -> Result<Self> {
        Self::new(grid, y.iter().map(|v| DVector::from_element(1, *v)).collect())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.y[0].len()
    }

    /// Values at interval midpoints from the local interpolating polynomial
    /// (cubic when at least four samples exist).
    pub fn midpoints(&self) -> Vec<DVector<f64>> {
        let y = &self.y;
        let steps = y.len() - 1;
        let combine = |w: [(usize, f64); 4]| -> DVector<f64> {
            let mut out = DVector::zeros(y[0].len());
            for (i, c) in w {
                if c != 0.0 {
                    out.axpy(c, &y[i], 1.0);
                }
            }
            out
        };
        (0..steps)
            .map(|i| match steps {
                1 => combine([(0, 0.5), (1, 0.5), (0, 0.0), (0, 0.0)]),
                2 if i == 0 => combine([(0, 3.0 / 8.0), (1, 0.75), (2, -1.0 / 8.0), (0, 0.0)]),
                2 => combine([(0, -1.0 / 8.0), (1, 0.75), (2, 3.0 / 8.0), (0, 0.0)]),
                _ if i == 0 => combine([(0, 5.0 / 16.0), (1, 15.0 / 16.0), (2, -5.0 / 16.0), (3, 1.0 / 16.0)]),
                _ if i == steps - 1 => combine([
                    (steps - 3, 1.0 / 16.0),
                    (steps - 2, -5.0 / 16.0),
                    (steps - 1, 15.0 / 16.0),
                    (steps, 5.0 / 16.0),
                ]),
                _ => combine([
                    (i - 1, -1.0 / 16.0),
                    (i, 9.0 / 16.0),
                    (i + 1, 9.0 / 16.0),
                    (i + 2, -1.0 / 16.0),
                ]),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherMethod {
    Sweep,
    ElTpbvp,
}

impl fmt::Display for SmootherMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SmootherMethod::Sweep => "sweep",
            SmootherMethod::ElTpbvp => "el_tpbvp",
        })
    }
}

/// Smoothed trajectory `x̂(t|T)`.
#[derive(Debug, Clone)]
pub struct SmootherRun {
    grid: TimeGrid,
    xhat_t: Vec<DVector<f64>>,
    method: SmootherMethod,
    warning: Option<String>,
}

impl SmootherRun {
    pub fn method(&self) -> SmootherMethod {
        self.method
    }

    /// Accuracy warning attached by the boundary-value solver, if any.
    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }
}

impl Estimate for SmootherRun {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn states(&self) -> &[DVector<f64>] {
        &self.xhat_t
    }

    fn subject(&self) -> Subject {
        Subject::Smoother
    }
}

fn check_finite(index: usize, x: &DVector<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_midpoints_are_exact_for_cubics() {
        let grid = TimeGrid::new(0.0, 0.1, 6).unwrap();
        let f = |t: f64| 2.0 - t + 3.0 * t * t - 0.5 * t * t * t;
        let y: Vec<f64> = (0..grid.len()).map(|i| f(grid.time(i))).collect();
        let mids = MeasurementSeries::scalar(grid, &y).unwrap().midpoints();
        for (i, m) in mids.iter().enumerate() {
            assert!((m[0] - f(grid.time(i) + 0.05)).abs() < 1e-13);
        }
    }

    #[test]
    fn short_grids_fall_back_to_lower_order() {
        let quad = |t: f64| 1.0 + t - t * t;
        let g2 = TimeGrid::new(0.0, 0.5, 2).unwrap();
        let y: Vec<f64> = (0..3).map(|i| quad(g2.time(i))).collect();
        let mids = MeasurementSeries::scalar(g2, &y).unwrap().midpoints();
        assert!((mids[0][0] - quad(0.25)).abs() < 1e-14);
        assert!((mids[1][0] - quad(0.75)).abs() < 1e-14);
        let g1 = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let mids = MeasurementSeries::scalar(g1, &[1.0, 3.0]).unwrap().midpoints();
        assert_eq!(mids[0][0], 2.0);
    }

    #[test]
    fn measurement_validation() {
        let grid = TimeGrid::new(0.0, 0.1, 2).unwrap();
        assert!(MeasurementSeries::scalar(grid, &[0.0, 1.0]).is_err());
        assert!(MeasurementSeries::scalar(grid, &[0.0, f64::NAN, 1.0]).is_err());
    }
}
