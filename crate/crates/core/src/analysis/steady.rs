use std::fmt;

use nalgebra::DVector;

use crate::estimators::{Estimate, Subject};
use crate::signals::SignalRun;
use crate::statespace::TimeGrid;
use crate::{Error, Result};

/// Estimate minus truth on every node.
#[derive(Debug, Clone)]
pub struct ErrorSeries {
    grid: TimeGrid,
    e: Vec<DVector<f64>>,
    subject: Subject,
}

impl ErrorSeries {
    pub fn new(grid: TimeGrid, e: Vec<DVector<f64>>, subject: Subject) -> Result<Self> {
        if e.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} errors for {} nodes", e.len(), grid.len())));
        }
        Ok(Self { grid, e, subject })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.e
    }

    pub fn subject(&self) -> Subject {
        self.subject
    }

    /// First component `e₁` on every node.
    pub fn first(&self) -> Vec<f64> {
        self.e.iter().map(|v| v[0]).collect()
    }
}

pub fn error_series(run: &impl Estimate, truth: &SignalRun) -> Result<ErrorSeries> {
    if run.grid() != truth.grid() {
        return Err(Error::GridMismatch("estimate and truth".into()));
    }
    let e = run
        .states()
        .iter()
        .zip(truth.states())
        .map(|(x, t)| {
            if x.len() != t.len() {
                return Err(Error::contract("estimate and truth dimensions differ"));
            }
            Ok(x - t)
        })
        .collect::<Result<Vec<_>>>()?;
    ErrorSeries::new(*run.grid(), e, run.subject())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerdictRegime {
    Zero,
    Constant(f64),
    Unbounded,
    Undetermined,
}

impl fmt::Display for VerdictRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictRegime::Zero => f.write_str("Zero"),
            VerdictRegime::Constant(v) => write!(f, "Constant {v:.6}"),
            VerdictRegime::Unbounded => f.write_str("Unbounded"),
            VerdictRegime::Undetermined => f.write_str("Undetermined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateVerdict {
    pub regime: VerdictRegime,
    /// Inclusive node range examined.
    pub window: (usize, usize),
    pub mean: f64,
    pub slope: f64,
    pub max_abs: f64,
}

/// Thresholds for [`classify_steady_state`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictThresholds {
    pub window_fraction: f64,
    pub slope_tol: f64,
    pub magnitude_cap: f64,
}

impl VerdictThresholds {
    /// `slope_tol = 1e-3 |a| / T`, `magnitude_cap = 10 max(|a|, |predicted constant|)`.
    /// A zero drift falls back to unit scale.
    pub fn for_experiment(a: f64, predicted_constant: Option<f64>, horizon: f64) -> Self {
        let scale = if a == 0.0 { 1.0 } else { a.abs() };
        let predicted = predicted_constant.map_or(0.0, f64::abs);
        Self {
            window_fraction: super::WINDOW_FRACTION,
            slope_tol: 1e-3 * scale / horizon,
            magnitude_cap: 10.0 * scale.max(predicted),
        }
    }
}

fn least_squares_slope(t: &[f64], e: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let em = e.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (ti, ei) in t.iter().zip(e) {
        num += (ti - tm) * (ei - em);
        den += (ti - tm) * (ti - tm);
    }
    num / den
}

/// Empirical steady-state regime of `e₁`.
///
/// Smoother series are read on the centered window
/// `[f T, (1 − f) T]`, filter series on the trailing window `[(1 − f) T, T]`.
/// The verdict is
/// * `Zero` when the window mean lies within `slope_tol · T` of zero and the
///   fitted slope is below `slope_tol`;
/// * `Constant(mean)` when the slope is below `slope_tol` otherwise;
/// * `Unbounded` when `|e₁|` exceeds `magnitude_cap` and the slope over the last
///   quarter of the window exceeds `slope_tol`;
/// * `Undetermined` otherwise.
pub fn classify_steady_state(
    series: &ErrorSeries,
    window_fraction: f64,
    slope_tol: f64,
    magnitude_cap: f64,
) -> Result<SteadyStateVerdict> {
    if !(window_fraction > 0.0 && window_fraction < 0.5) {
        return Err(Error::contract("window fraction must lie in (0, 0.5)"));
    }
    let grid = series.grid();
    let last = grid.steps();
    let lo = (window_fraction * last as f64).ceil() as usize;
    let hi = ((1.0 - window_fraction) * last as f64).floor() as usize;
    let window = match series.subject() {
        Subject::Smoother => (lo, hi),
        Subject::Filter => (hi, last),
    };
    if window.1 < window.0 || window.1 - window.0 + 1 < 10 {
        return Err(Error::contract("steady-state window holds fewer than 10 samples"));
    }

    let t: Vec<f64> = (window.0..=window.1).map(|i| grid.time(i)).collect();
    let e: Vec<f64> = series.values()[window.0..=window.1].iter().map(|v| v[0]).collect();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let slope = least_squares_slope(&t, &e);
    let max_abs = e.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let quarter = (e.len() / 4).max(2);
    let tail_slope = least_squares_slope(&t[t.len() - quarter..], &e[e.len() - quarter..]);

    let band = slope_tol * (grid.horizon() - grid.t0());
    let regime = if mean.abs() <= band && slope.abs() <= slope_tol {
        VerdictRegime::Zero
    } else if slope.abs() <= slope_tol {
        VerdictRegime::Constant(mean)
    } else if max_abs > magnitude_cap && tail_slope.abs() > slope_tol {
        VerdictRegime::Unbounded
    } else {
        VerdictRegime::Undetermined
    };
    Ok(SteadyStateVerdict { regime, window, mean, slope, max_abs })
}

/// Time before `T` at which the error on the interior stretch first stays
/// inside `target ± band` all the way down to the interior start; `None` when
/// it never settles.
pub fn lag_to_settle(series: &ErrorSeries, window_fraction: f64, target: f64, band: f64) -> Option<f64> {
    let grid = series.grid();
    let start = (window_fraction * grid.steps() as f64).ceil() as usize;
    let e = series.values();
    let mut settled = None;
    for i in (start..grid.len()).rev() {
        if (e[i][0] - target).abs() <= band {
            settled = Some(i);
        } else if settled.is_some() {
            // Outside the band again further from T: settling starts after this point.
            settled = None;
            let later = (i + 1..grid.len()).find(|&j| (e[j][0] - target).abs() <= band)?;
            let stays = (start..=later).all(|j| (e[j][0] - target).abs() <= band);
            if stays {
                settled = Some(later);
            }
            break;
        }
    }
    // Index closest to T from which the band holds all the way back to `start`.
    let mut idx = settled?;
    if (start..=idx).any(|j| (e[j][0] - target).abs() > band) {
        return None;
    }
    while idx + 1 < grid.len() && (e[idx + 1][0] - target).abs() <= band {
        idx += 1;
    }
    Some(grid.horizon() - grid.time(idx))
}
