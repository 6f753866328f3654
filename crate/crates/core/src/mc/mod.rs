//! Monte-Carlo engine: GBM paths, control-variate prices, Malliavin density
//! estimators and projection-error estimates.
//!
//! Paths are generated in blocks of [`BLOCK_SIZE`]. Block `b` draws from its own
//! ChaCha8 stream `(seed, stream_base + b)`, and estimators reduce the paths in
//! block order, so a fixed seed gives bit-identical results for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::model::MarketParams;

mod density;
mod likelihood;
mod pricing;

pub use density::{
    density_cv, density_cv_from_samples, density_malliavin, density_malliavin_from_samples,
    density_mass, density_mass_on, geometric_density, geometric_density_malliavin,
    geometric_density_malliavin_from_samples, DensityCv, Threshold,
};
pub use likelihood::{
    error_bound, likelihood_norm_sq, likelihood_norm_sq_from_samples, likelihood_norm_sq_with, sre,
    tail_envelope, upper_tail_bound, ErrorBound, Sre, TailPoint,
};
pub use pricing::{
    geometric_log_params, geometric_price_closed_form, price_cv, price_cv_from_samples,
    price_plain, price_plain_from_samples,
};

pub const BLOCK_SIZE: usize = 1024;
/// Stream offset of the independent second simulation used by the likelihood norm.
pub const INDEPENDENT_STREAM_BASE: u64 = 1 << 40;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores. Never changes results.
    pub batches: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            paths: 200_000,
            dt: 1e-3,
            seed: 42,
            batches: 0,
        }
    }
}

impl McConfig {
    pub fn validate(&self, market: &MarketParams) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::invalid(
                Stage::MonteCarlo,
                "at least one path is required",
            ));
        }
        if !(self.dt > 0.0 && self.dt <= market.maturity) {
            return Err(Error::invalid(
                Stage::MonteCarlo,
                format!(
                    "time step must lie in (0, T = {}], got {}",
                    market.maturity, self.dt
                ),
            ));
        }
        Ok(())
    }

    /// Number of time steps, `T / dt` rounded to the nearest integer.
    pub fn steps(&self, market: &MarketParams) -> usize {
        ((market.maturity / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub n_effective: usize,
    pub config: McConfig,
}

impl McEstimate {
    pub fn new(value: f64, std_error: f64, n_effective: usize, config: McConfig) -> Self {
        McEstimate {
            value,
            std_error,
            ci95: (value - Z95 * std_error, value + Z95 * std_error),
            n_effective,
            config,
        }
    }

    /// Sample mean and standard error of `values`, reduced in order.
    pub fn from_values(values: impl IntoIterator<Item = f64>, config: McConfig) -> Self {
        let mut s = RunningStats::default();
        for v in values {
            s.push(v);
        }
        s.estimate(config)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci95.0 <= x && x <= self.ci95.1
    }

    /// Distance from `x` to the confidence interval (zero inside).
    pub fn distance_to_ci(&self, x: f64) -> f64 {
        (self.ci95.0 - x).max(x - self.ci95.1).max(0.0)
    }
}

/// Welford mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub(crate) fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub(crate) fn estimate(&self, config: McConfig) -> McEstimate {
        let se = if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        McEstimate::new(self.mean, se, self.n, config)
    }
}

/// One simulated path, in the market's currency units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub s_t: f64,
    /// Trapezoidal arithmetic average.
    pub a_t: f64,
    /// Trapezoidal geometric average.
    pub q_t: f64,
    /// Terminal Brownian value.
    pub b_t: f64,
}

/// Simulates `config.paths` paths with exact log-Euler increments.
pub fn simulate(market: &MarketParams, config: &McConfig) -> Result<Vec<PathSample>> {
    simulate_streams(market, config, 0)
}

/// Paths independent of [`simulate`] for the same seed, drawn from the streams
/// starting at [`INDEPENDENT_STREAM_BASE`].
pub fn simulate_independent(market: &MarketParams, config: &McConfig) -> Result<Vec<PathSample>> {
    simulate_streams(market, config, INDEPENDENT_STREAM_BASE)
}

pub(crate) fn simulate_streams(
    market: &MarketParams,
    config: &McConfig,
    stream_base: u64,
) -> Result<Vec<PathSample>> {
    market.validate()?;
    config.validate(market)?;
    let steps = config.steps(market);
    let blocks = config.paths.div_ceil(BLOCK_SIZE);
    let run = || -> Vec<Vec<PathSample>> {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let n = BLOCK_SIZE.min(config.paths - b * BLOCK_SIZE);
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(stream_base + b as u64);
                (0..n)
                    .map(|_| sample_path(market, steps, &mut rng))
                    .collect()
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.batches)
        .build()
        .map_err(|e| {
            Error::invalid(
                Stage::MonteCarlo,
                format!("cannot start worker threads: {e}"),
            )
        })?;
    Ok(pool.install(run).into_iter().flatten().collect())
}

fn sample_path(market: &MarketParams, steps: usize, rng: &mut ChaCha8Rng) -> PathSample {
    let h = market.maturity / steps as f64;
    let sqrt_h = h.sqrt();
    let drift = (market.r - 0.5 * market.sigma * market.sigma) * h;
    let vol = market.sigma * sqrt_h;
    let mut log_s = 0.0f64;
    let mut b = 0.0f64;
    // trapezoid: half weight on both end points
    let mut sum_s = 0.5;
    let mut sum_log = 0.0;
    for k in 0..steps {
        let z: f64 = StandardNormal.sample(rng);
        b += sqrt_h * z;
        log_s += drift + vol * z;
        let w = if k + 1 == steps { 0.5 } else { 1.0 };
        sum_s += w * log_s.exp();
        sum_log += w * log_s;
    }
    let n = steps as f64;
    PathSample {
        s_t: market.spot * log_s.exp(),
        a_t: market.spot * sum_s / n,
        q_t: market.spot * (sum_log / n).exp(),
        b_t: b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(paths: usize, batches: usize) -> McConfig {
        McConfig {
            paths,
            dt: 1e-2,
            seed: 7,
            batches,
        }
    }

    #[test]
    fn frozen_dynamics() {
        let m = MarketParams::new(0.0, 1e-8, 1.0, 1.0, 1.0).unwrap();
        for p in simulate(&m, &small(500, 1)).unwrap() {
            assert!((p.a_t - 1.0).abs() < 1e-6);
            assert!((p.q_t - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn thread_count_does_not_change_paths() {
        let m = MarketParams::new(0.05, 0.5, 1.0, 2.0, 2.0).unwrap();
        let a = simulate(&m, &small(3000, 1)).unwrap();
        let b = simulate(&m, &small(3000, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3000);
    }

    #[test]
    fn arithmetic_dominates_geometric() {
        let m = MarketParams::new(0.05, 0.8, 1.0, 2.0, 2.0).unwrap();
        for p in simulate(&m, &small(2000, 0)).unwrap() {
            assert!(p.a_t >= p.q_t - 1e-12);
            assert!(p.s_t > 0.0 && p.q_t > 0.0);
        }
    }

    #[test]
    fn invalid_config() {
        let m = MarketParams::new(0.05, 0.5, 1.0, 2.0, 2.0).unwrap();
        assert!(simulate(&m, &small(0, 1)).is_err());
        let cfg = McConfig {
            dt: 2.0,
            ..small(10, 1)
        };
        assert!(simulate(&m, &cfg).is_err());
    }

    #[test]
    fn ci_is_symmetric() {
        let e = McEstimate::from_values([1.0, 2.0, 3.0, 4.0], McConfig::default());
        assert_eq!(e.value, 2.5);
        assert!((e.ci95.1 - e.value - (e.value - e.ci95.0)).abs() < 1e-15);
        assert!((e.ci95.1 - e.value - Z95 * e.std_error).abs() < 1e-15);
        assert!(e.contains(2.5) && !e.contains(10.0));
        assert_eq!(e.distance_to_ci(2.5), 0.0);
    }
}
