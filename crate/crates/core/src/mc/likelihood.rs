//! `||ell||_w^2` by simulation, the likelihood projection error and the
//! resulting bound `|pi - pi^(N)| <= sqrt(eps_F eps_ell)`.

use serde::{Deserialize, Serialize};

use super::density::{geometric_density, geometric_mean, weights, Threshold};
use super::{
    simulate_independent, simulate_streams, McConfig, McEstimate, PathSample, RunningStats,
};
use crate::basis::{weight_density_unchecked, WeightParams};
use crate::error::{Error, Result, Stage};
use crate::model::MarketParams;
use crate::pricer::SeriesApproximation;
use crate::special::norm_cdf;

/// `||ell||_w^2 = E[g_hat(A~) / w(A~)]` with `A~` an independent copy of `A_T / S0`
/// and `g_hat` the control-variate density estimator.
///
/// The estimand is finite only for `nu^2 > sigma^2 T / 2`. Its variance needs the
/// stronger `nu^2 > 2 sigma^2 T / 3`, so close to the threshold the reported
/// standard error is itself unreliable.
pub fn likelihood_norm_sq(
    market: &MarketParams,
    config: &McConfig,
    weight: &WeightParams,
) -> Result<McEstimate> {
    weight.check_square_integrable(market, Stage::MonteCarlo)?;
    let main = simulate_streams(market, config, 0)?;
    let tilde = simulate_independent(market, config)?;
    likelihood_norm_sq_from_samples(market, weight, &main, &tilde, config)
}

/// As [`likelihood_norm_sq`], from paths `main` and independent paths `tilde`.
pub fn likelihood_norm_sq_from_samples(
    market: &MarketParams,
    weight: &WeightParams,
    main: &[PathSample],
    tilde: &[PathSample],
    config: &McConfig,
) -> Result<McEstimate> {
    weight.check_square_integrable(market, Stage::MonteCarlo)?;
    if main.len() != tilde.len() {
        return Err(Error::invalid(
            Stage::MonteCarlo,
            "path sets must have equal length",
        ));
    }
    let m1 = market.first_moment();
    let mq = geometric_mean(market);
    let draws: Vec<f64> = tilde.iter().map(|p| p.a_t / market.spot).collect();
    Ok(likelihood_norm_sq_with(
        weight,
        &draws,
        |i, x| {
            let w = weights(market, &main[i]);
            let c1 = Threshold::FirstMoment;
            let y = (f64::from(u8::from(w.a >= x)) - c1.eval(x, m1)) * w.w_a;
            let z = (f64::from(u8::from(w.q >= x)) - c1.eval(x, mq)) * w.w_q;
            y + geometric_density(market, x) - z
        },
        config,
    ))
}

/// Mean of `kernel(i, x_i) / w(x_i)` over the draws `x_i`, where `kernel(i, x)` is
/// an unbiased per-sample estimate of the density of the `x_i` at `x`.
pub fn likelihood_norm_sq_with(
    weight: &WeightParams,
    draws: &[f64],
    kernel: impl Fn(usize, f64) -> f64,
    config: &McConfig,
) -> McEstimate {
    let mut s = RunningStats::default();
    for (i, &x) in draws.iter().enumerate() {
        s.push(kernel(i, x) / weight_density_unchecked(weight, x));
    }
    s.estimate(*config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub order: usize,
    pub eps_f: f64,
    /// `||ell||^2 - sum ell_n^2`, not floored.
    pub eps_ell: f64,
    pub eps_ell_se: f64,
    /// `sqrt(eps_F max(eps_ell, 0))`.
    pub bound: f64,
    /// Bound evaluated at the ends of the 95% interval of `eps_ell`.
    pub ci95: (f64, f64),
    /// Delta-method standard error of the bound; absent when `eps_ell <= 0`.
    pub delta_se: Option<f64>,
}

impl ErrorBound {
    /// `eps_ell` exceeds `k` standard errors (and the payoff error is positive).
    pub fn is_significant(&self, k: f64) -> bool {
        self.eps_f > 0.0 && self.eps_ell > k * self.eps_ell_se
    }
}

pub fn error_bound(approx: &SeriesApproximation, norm: &McEstimate) -> ErrorBound {
    let eps_f = approx.eps_f.max(0.0);
    let eps_ell = norm.value - approx.likelihood_partial_norm_sq();
    let se = norm.std_error;
    let at = |e: f64| (eps_f * e.max(0.0)).sqrt();
    let z = (norm.ci95.1 - norm.value) / se.max(f64::MIN_POSITIVE);
    let bound = at(eps_ell);
    ErrorBound {
        order: approx.order,
        eps_f: approx.eps_f,
        eps_ell,
        eps_ell_se: se,
        bound,
        ci95: (at(eps_ell - z * se), at(eps_ell + z * se)),
        delta_se: (eps_ell > 0.0 && eps_f > 0.0).then(|| 0.5 * (eps_f / eps_ell).sqrt() * se),
    }
}

/// Squared relative error of the series against a Monte-Carlo price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sre {
    pub value: f64,
    pub sqrt: f64,
    /// Range of `|p - pi^(N)| / pi^(N)` over the 95% interval of the MC price.
    pub sqrt_ci95: (f64, f64),
}

pub fn sre(mc: &McEstimate, series_price: f64) -> Sre {
    let rel = |p: f64| ((p - series_price) / series_price).abs();
    let (lo, hi) = mc.ci95;
    let lower = if mc.contains(series_price) {
        0.0
    } else {
        rel(lo).min(rel(hi))
    };
    let s = rel(mc.value);
    Sre {
        value: s * s,
        sqrt: s,
        sqrt_ci95: (lower, rel(lo).max(rel(hi))),
    }
}

/// `P(A_T / S0 >= x) <= 2 P(Z >= (log x - (r - sigma^2/2)^+ T) / (sigma sqrt T))`.
pub fn upper_tail_bound(market: &MarketParams, x: f64) -> f64 {
    let drift = (market.r - 0.5 * market.sigma * market.sigma).max(0.0) * market.maturity;
    let z = (x.ln() - drift) / (market.sigma * market.maturity.sqrt());
    (2.0 * norm_cdf(-z)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub x: f64,
    pub empirical: f64,
    pub bound: f64,
}

/// Empirical survival function of `A_T / S0` next to [`upper_tail_bound`]. Diagnostic only.
pub fn tail_envelope(market: &MarketParams, paths: &[PathSample], xs: &[f64]) -> Vec<TailPoint> {
    let n = paths.len() as f64;
    xs.iter()
        .map(|&x| TailPoint {
            x,
            empirical: paths.iter().filter(|p| p.a_t / market.spot >= x).count() as f64 / n,
            bound: upper_tail_bound(market, x),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sre_interval() {
        let mc = McEstimate::new(1.01, 0.001, 100, McConfig::default());
        let s = sre(&mc, 1.0);
        assert!((s.sqrt - 0.01).abs() < 1e-12);
        assert!(s.sqrt_ci95.0 < 0.01 && 0.01 < s.sqrt_ci95.1);
        let s = sre(&mc, 1.01);
        assert_eq!(s.sqrt_ci95.0, 0.0);
    }

    #[test]
    fn tail_bound_limits() {
        let m = MarketParams::new(0.05, 0.3, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(upper_tail_bound(&m, 1e-3), 1.0);
        assert!(upper_tail_bound(&m, 10.0) < 1e-10);
    }
}
