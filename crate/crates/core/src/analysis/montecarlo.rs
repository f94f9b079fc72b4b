use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::estimators::{kalman_filter, sweep_smoother, Estimate};
use crate::riccati::integrate_riccati;
use crate::signals::{stochastic_signal, PolynomialDrift};
use crate::statespace::{build_companion, IntegratorModel, TimeGrid};
use crate::{Error, Result};

const CHUNK: usize = 16;

/// Per-node mean and unbiased variance of `e₁` for both estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloStats {
    pub grid: TimeGrid,
    pub paths: usize,
    pub mean_filter: Vec<f64>,
    pub var_filter: Vec<f64>,
    pub mean_smoother: Vec<f64>,
    pub var_smoother: Vec<f64>,
}

#[derive(Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, e: impl Iterator<Item = f64>) {
        self.count += 1.0;
        for ((mean, m2), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(e) {
            let d = x - *mean;
            *mean += d / self.count;
            *m2 += d * (x - *mean);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.count / total;
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / total;
        }
        self.count = total;
    }

    fn variance(&self) -> Vec<f64> {
        self.m2.iter().map(|m2| m2 / (self.count - 1.0)).collect()
    }
}

/// [`monte_carlo_variance_with`] with seeds `seed, seed + 1, ...`.
pub fn monte_carlo_variance(
    model: &IntegratorModel,
    drift: &PolynomialDrift,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<MonteCarloStats> {
    monte_carlo_variance_with(model, drift, grid, paths, seed, 1)
}

/// Runs `paths` seeded experiments, path `k` using seed `seed + stride·k`, with
/// one covariance schedule from `P0 = I` shared by all of them. Paths are
/// processed in fixed chunks in parallel and merged in chunk order, so the
/// result does not depend on the thread count. A stride of 0 repeats one seed.
pub fn monte_carlo_variance_with(
    model: &IntegratorModel,
    drift: &PolynomialDrift,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
    seed_stride: u64,
) -> Result<MonteCarloStats> {
    if paths < 2 {
        return Err(Error::contract("Monte Carlo needs at least 2 paths"));
    }
    let n = model.n();
    let general = build_companion(model);
    let schedule = Arc::new(integrate_riccati(&general, &DMatrix::identity(n, n), grid)?);
    let x0 = DVector::zeros(n);
    let len = grid.len();

    let chunks: Vec<(Moments, Moments)> = (0..paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut filt_m = Moments::new(len);
            let mut smooth_m = Moments::new(len);
            for k in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                let path_seed = seed.wrapping_add(seed_stride.wrapping_mul(k as u64));
                let wrap = |source: Error| Error::Path { path: k, source: Box::new(source) };
                let truth = stochastic_signal(model, drift, grid, path_seed);
                let filt = kalman_filter(&general, &schedule, truth.measurements(), &x0).map_err(wrap)?;
                let smooth = sweep_smoother(&general, &filt).map_err(wrap)?;
                let x = truth.states();
                filt_m.push(filt.states().iter().zip(x).map(|(e, t)| e[0] - t[0]));
                smooth_m.push(smooth.states().iter().zip(x).map(|(e, t)| e[0] - t[0]));
            }
            Ok((filt_m, smooth_m))
        })
        .collect::<Result<_>>()?;

    let mut filt_m = Moments::new(len);
    let mut smooth_m = Moments::new(len);
    for (f, s) in &chunks {
        filt_m.merge(f);
        smooth_m.merge(s);
    }
    Ok(MonteCarloStats {
        grid: *grid,
        paths,
        var_filter: filt_m.variance(),
        mean_filter: filt_m.mean,
        var_smoother: smooth_m.variance(),
        mean_smoother: smooth_m.mean,
    })
}

/// Fraction of interior nodes `[f N, (1 − f) N]` where the smoother variance is
/// strictly below the filter variance.
pub fn smoother_advantage(stats: &MonteCarloStats, window_fraction: f64) -> f64 {
    let last = stats.grid.steps();
    let lo = (window_fraction * last as f64).ceil() as usize;
    let hi = ((1.0 - window_fraction) * last as f64).floor() as usize;
    if hi < lo {
        return 0.0;
    }
    let below = (lo..=hi).filter(|&i| stats.var_smoother[i] < stats.var_filter[i]).count();
    below as f64 / (hi - lo + 1) as f64
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn model() -> IntegratorModel {
        IntegratorModel::new(1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn repeated_seed_gives_zero_variance() {
        let grid = TimeGrid::new(0.0, 0.05, 100).unwrap();
        let stats = monte_carlo_variance_with(&model(), &PolynomialDrift::none(), &grid, 2, 9, 0).unwrap();
        assert_eq!(stats.paths, 2);
        assert!(stats.var_filter.iter().chain(&stats.var_smoother).all(|v| *v == 0.0));
    }

    #[test]
    fn too_few_paths() {
        let grid = TimeGrid::new(0.0, 0.05, 10).unwrap();
        assert!(monte_carlo_variance(&model(), &PolynomialDrift::none(), &grid, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn chunked_merge_matches_two_pass(
            data in prop::collection::vec(-1e3f64..1e3, 2..200),
            chunk in 1usize..40,
            offset in -1e6f64..1e6,
        ) {
            let data: Vec<f64> = data.iter().map(|x| x + offset).collect();
            let mut acc = Moments::new(1);
            for part in data.chunks(chunk) {
                let mut m = Moments::new(1);
                for x in part {
                    m.push(std::iter::once(*x));
                }
                acc.merge(&m);
            }
            let len = data.len() as f64;
            let mean = data.iter().sum::<f64>() / len;
            let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (len - 1.0);
            prop_assert!((acc.mean[0] - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            prop_assert!((acc.variance()[0] - var).abs() <= 1e-8 * var.max(1e-6) + 1e-6);
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let grid = TimeGrid::new(0.0, 0.05, 200).unwrap();
        let drift = PolynomialDrift::new(1.0, 0).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo_variance(&model(), &drift, &grid, 40, 5).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
