use super::{simulate, McConfig, McEstimate, PathSample};
use crate::error::Result;
use crate::model::MarketParams;
use crate::special::norm_cdf;

/// Mean and variance of `log Q_T` for the continuous geometric average.
pub fn geometric_log_params(market: &MarketParams) -> (f64, f64) {
    let m =
        market.spot.ln() + 0.5 * (market.r - 0.5 * market.sigma * market.sigma) * market.maturity;
    (m, market.sigma * market.sigma * market.maturity / 3.0)
}

/// Call on the continuous geometric average (log-normal closed form).
pub fn geometric_price_closed_form(market: &MarketParams) -> f64 {
    let (m, v) = geometric_log_params(market);
    let s = v.sqrt();
    let df = market.discount();
    let k = market.strike;
    if k == 0.0 {
        return df * (m + 0.5 * v).exp();
    }
    df * ((m + 0.5 * v).exp() * norm_cdf((m + v - k.ln()) / s) - k * norm_cdf((m - k.ln()) / s))
}

pub fn price_plain(market: &MarketParams, config: &McConfig) -> Result<McEstimate> {
    Ok(price_plain_from_samples(
        market,
        &simulate(market, config)?,
        config,
    ))
}

pub fn price_plain_from_samples(
    market: &MarketParams,
    paths: &[PathSample],
    config: &McConfig,
) -> McEstimate {
    let df = market.discount();
    McEstimate::from_values(
        paths.iter().map(|p| df * (p.a_t - market.strike).max(0.0)),
        *config,
    )
}

/// Arithmetic call with the geometric call as control variate (unit coefficient).
pub fn price_cv(market: &MarketParams, config: &McConfig) -> Result<McEstimate> {
    Ok(price_cv_from_samples(
        market,
        &simulate(market, config)?,
        config,
    ))
}

pub fn price_cv_from_samples(
    market: &MarketParams,
    paths: &[PathSample],
    config: &McConfig,
) -> McEstimate {
    let df = market.discount();
    let k = market.strike;
    let geo = geometric_price_closed_form(market);
    McEstimate::from_values(
        paths
            .iter()
            .map(|p| df * ((p.a_t - k).max(0.0) - (p.q_t - k).max(0.0)) + geo),
        *config,
    )
}
