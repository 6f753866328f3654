//! Malliavin-weight density estimators.
//!
//! For the normalized average `a = A_T / S0` and any deterministic `c`,
//! `g(x) = E[(1{a >= x} - c(x)) W]` with
//! `W = (2 / sigma^2) ((S_T / S0 - 1) / (T a^2) + (sigma^2 - r) / a)`.
//! The same construction for the geometric average `Q_T`, whose density is
//! known, provides a control variate.

use super::pricing::geometric_log_params;
use super::{simulate, McConfig, McEstimate, PathSample, RunningStats};
use crate::error::{Error, Result, Stage};
use crate::model::MarketParams;
use std::f64::consts::PI;

/// The shift `c(x)` subtracted from the indicator. It does not change the
/// mean; centring at the first moment keeps the estimate near zero far from the mass.
#[derive(Debug, Clone, Copy)]
pub enum Threshold {
    Zero,
    /// `1{x <= m_1}` with `m_1` the mean of the averaged quantity.
    FirstMoment,
    Custom(fn(f64) -> f64),
}

impl Threshold {
    pub(crate) fn eval(&self, x: f64, mean: f64) -> f64 {
        match self {
            Threshold::Zero => 0.0,
            Threshold::FirstMoment => f64::from(u8::from(x <= mean)),
            Threshold::Custom(c) => c(x),
        }
    }

    /// `int_lo^hi c(x) dx`.
    fn integral(&self, lo: f64, hi: f64, mean: f64) -> f64 {
        match self {
            Threshold::Zero => 0.0,
            Threshold::FirstMoment => mean.clamp(lo, hi) - lo,
            Threshold::Custom(c) => {
                let n = 4000;
                let h = (hi - lo) / n as f64;
                (0..n).map(|i| c(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
            }
        }
    }
}

/// Per-path quantities in normalized units.
#[derive(Clone, Copy)]
pub(crate) struct Weights {
    pub a: f64,
    pub q: f64,
    /// Malliavin weight of the arithmetic average.
    pub w_a: f64,
    /// Malliavin weight of the geometric average.
    pub w_q: f64,
}

pub(crate) fn weights(market: &MarketParams, p: &PathSample) -> Weights {
    let (r, s2, t) = (market.r, market.sigma * market.sigma, market.maturity);
    let a = p.a_t / market.spot;
    let q = p.q_t / market.spot;
    let s = p.s_t / market.spot;
    Weights {
        a,
        q,
        w_a: 2.0 / s2 * ((s - 1.0) / (t * a * a) + (s2 - r) / a),
        w_q: 2.0 * p.b_t / (market.sigma * t * q) + 1.0 / q,
    }
}

/// Mean of the normalized geometric average.
pub(crate) fn geometric_mean(market: &MarketParams) -> f64 {
    let (m, v) = geometric_log_params(&market.normalized());
    (m + 0.5 * v).exp()
}

/// Closed-form density of `Q_T / S0` (continuous geometric average).
pub fn geometric_density(market: &MarketParams, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (m, v) = geometric_log_params(&market.normalized());
    let z = x.ln() - m;
    (-0.5 * z * z / v).exp() / (x * (2.0 * PI * v).sqrt())
}

fn check_grid(xs: &[f64]) -> Result<()> {
    match xs.iter().find(|x| !(**x > 0.0)) {
        Some(x) => Err(Error::invalid(
            Stage::MonteCarlo,
            format!("density grid points must be positive, got {x}"),
        )),
        None => Ok(()),
    }
}

fn per_point(
    xs: &[f64],
    paths: &[PathSample],
    market: &MarketParams,
    config: &McConfig,
    f: impl Fn(f64, &Weights) -> f64,
) -> Vec<McEstimate> {
    let ws: Vec<Weights> = paths.iter().map(|p| weights(market, p)).collect();
    xs.iter()
        .map(|&x| McEstimate::from_values(ws.iter().map(|w| f(x, w)), *config))
        .collect()
}

/// Density of `A_T / S0` at each grid point.
pub fn density_malliavin(
    market: &MarketParams,
    config: &McConfig,
    c: Threshold,
    xs: &[f64],
) -> Result<Vec<McEstimate>> {
    check_grid(xs)?;
    let paths = simulate(market, config)?;
    Ok(density_malliavin_from_samples(
        market, &paths, config, c, xs,
    ))
}

pub fn density_malliavin_from_samples(
    market: &MarketParams,
    paths: &[PathSample],
    config: &McConfig,
    c: Threshold,
    xs: &[f64],
) -> Vec<McEstimate> {
    let m1 = market.first_moment();
    per_point(xs, paths, market, config, |x, w| {
        (f64::from(u8::from(w.a >= x)) - c.eval(x, m1)) * w.w_a
    })
}

/// Density of `Q_T / S0` by the same construction; its closed form is [`geometric_density`].
pub fn geometric_density_malliavin(
    market: &MarketParams,
    config: &McConfig,
    c: Threshold,
    xs: &[f64],
) -> Result<Vec<McEstimate>> {
    check_grid(xs)?;
    let paths = simulate(market, config)?;
    Ok(geometric_density_malliavin_from_samples(
        market, &paths, config, c, xs,
    ))
}

pub fn geometric_density_malliavin_from_samples(
    market: &MarketParams,
    paths: &[PathSample],
    config: &McConfig,
    c: Threshold,
    xs: &[f64],
) -> Vec<McEstimate> {
    let mq = geometric_mean(market);
    per_point(xs, paths, market, config, |x, w| {
        (f64::from(u8::from(w.q >= x)) - c.eval(x, mq)) * w.w_q
    })
}

/// Control-variate density estimates next to the plain ones from the same paths.
#[derive(Debug, Clone)]
pub struct DensityCv {
    pub xs: Vec<f64>,
    pub cv: Vec<McEstimate>,
    pub plain: Vec<McEstimate>,
    /// `Var(plain) / Var(cv)` per grid point (NaN where both vanish).
    pub variance_reduction: Vec<f64>,
}

impl DensityCv {
    /// Mean of the finite per-point variance-reduction factors.
    pub fn mean_variance_reduction(&self) -> f64 {
        let v: Vec<f64> = self
            .variance_reduction
            .iter()
            .copied()
            .filter(|f| f.is_finite())
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn density_cv(market: &MarketParams, config: &McConfig, xs: &[f64]) -> Result<DensityCv> {
    check_grid(xs)?;
    let paths = simulate(market, config)?;
    Ok(density_cv_from_samples(market, &paths, config, xs))
}

pub fn density_cv_from_samples(
    market: &MarketParams,
    paths: &[PathSample],
    config: &McConfig,
    xs: &[f64],
) -> DensityCv {
    let m1 = market.first_moment();
    let mq = geometric_mean(market);
    let ws: Vec<Weights> = paths.iter().map(|p| weights(market, p)).collect();
    let mut cv = Vec::with_capacity(xs.len());
    let mut plain = Vec::with_capacity(xs.len());
    let mut factor = Vec::with_capacity(xs.len());
    for &x in xs {
        let q = geometric_density(market, x);
        let (c1, c2) = (
            Threshold::FirstMoment.eval(x, m1),
            Threshold::FirstMoment.eval(x, mq),
        );
        let mut s_cv = RunningStats::default();
        let mut s_plain = RunningStats::default();
        for w in &ws {
            let y = (f64::from(u8::from(w.a >= x)) - c1) * w.w_a;
            let z = (f64::from(u8::from(w.q >= x)) - c2) * w.w_q;
            s_plain.push(y);
            s_cv.push(y + q - z);
        }
        cv.push(s_cv.estimate(*config));
        plain.push(s_plain.estimate(*config));
        factor.push(s_plain.variance() / s_cv.variance());
    }
    DensityCv {
        xs: xs.to_vec(),
        cv,
        plain,
        variance_reduction: factor,
    }
}

/// Total mass of the density estimator over `(0, inf)`.
///
/// Integrating the estimator in `x` path by path gives `(a - m_1) W`, so no grid is needed.
pub fn density_mass(market: &MarketParams, paths: &[PathSample], config: &McConfig) -> McEstimate {
    let m1 = market.first_moment();
    McEstimate::from_values(
        paths.iter().map(|p| {
            let w = weights(market, p);
            (w.a - m1) * w.w_a
        }),
        *config,
    )
}

/// Mass of the density estimator on `[lo, hi]`, integrated exactly path by path.
pub fn density_mass_on(
    market: &MarketParams,
    paths: &[PathSample],
    config: &McConfig,
    c: Threshold,
    lo: f64,
    hi: f64,
) -> McEstimate {
    let m1 = market.first_moment();
    let ci = c.integral(lo, hi, m1);
    McEstimate::from_values(
        paths.iter().map(|p| {
            let w = weights(market, p);
            (w.a.clamp(lo, hi) - lo - ci) * w.w_a
        }),
        *config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_density_integrates_to_one() {
        let m = MarketParams::new(0.05, 0.5, 1.0, 2.0, 2.0).unwrap();
        let h = 1e-4;
        let mass: f64 = (1..100_000)
            .map(|i| geometric_density(&m, i as f64 * h))
            .sum::<f64>()
            * h;
        assert!((mass - 1.0).abs() < 1e-6);
        assert_eq!(geometric_density(&m, 0.0), 0.0);
    }

    #[test]
    fn threshold_integrals() {
        assert_eq!(Threshold::FirstMoment.integral(0.5, 2.0, 1.2), 0.7);
        assert_eq!(Threshold::FirstMoment.integral(0.5, 2.0, 3.0), 1.5);
        assert_eq!(Threshold::Zero.integral(0.5, 2.0, 1.0), 0.0);
        let c = Threshold::Custom(|x| if x <= 1.2 { 1.0 } else { 0.0 });
        assert!((c.integral(0.5, 2.0, 0.0) - 0.7).abs() < 1e-3);
    }
}
