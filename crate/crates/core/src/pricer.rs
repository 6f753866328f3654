//! Payoff and likelihood coefficients, the truncated series price and the
//! density approximant.
//!
//! Everything is computed for the normalized problem `S0 = 1` (strike `K / S0`)
//! and scaled back, so coefficient vectors `f` and prices are in currency units
//! while `ell` and densities refer to the normalized average `A_T / S0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{
    default_weight, gram, orthonormal_basis, weight_density_unchecked, BasisMethod, GramForm,
    OrthonormalBasis, WeightParams, RCOND_WARN,
};
use crate::error::{Error, Result, Stage};
use crate::model::{moments, MarketParams, MomentKind, MomentVector};
use crate::special::norm_cdf;

pub const DEFAULT_ORDER: usize = 20;
pub const MAX_ORDER: usize = 40;
/// Orders above this still run but are flagged.
pub const ORDER_WARN: usize = 20;

/// Relative rounding level assumed for each coefficient entry when bounding
/// the floating-point noise of a series term.
const NOISE_EPS: f64 = 8.0 * f64::EPSILON;
/// Terms smaller than this fraction of the leading term never stop the series.
const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PayoffKind {
    #[default]
    Call,
    Put,
    /// `x - K`, reproduced exactly by any basis of degree at least one.
    Forward,
}

/// `d_n = (mu + n nu^2 - log K) / nu`; `+inf` for `K = 0`.
fn d(weight: &WeightParams, n: usize, strike: f64) -> f64 {
    (weight.mu + n as f64 * weight.nu_sq() - strike.ln()) / weight.nu
}

/// `s_{i+1} / s_i = e^{mu + (2i + 1) nu^2 / 2}`.
fn moment_ratio(weight: &WeightParams, i: usize) -> f64 {
    (weight.mu + 0.5 * (2 * i + 1) as f64 * weight.nu_sq()).exp()
}

/// Undiscounted scaled payoff moments `fbar_i = E_w[F(x) x^i] / s_i` for a unit initial price.
pub fn scaled_payoff_vector(
    weight: &WeightParams,
    strike: f64,
    degree: usize,
    kind: PayoffKind,
) -> Vec<f64> {
    (0..=degree)
        .map(|i| {
            let rho = moment_ratio(weight, i);
            match kind {
                PayoffKind::Call => {
                    rho * norm_cdf(d(weight, i + 1, strike))
                        - strike * norm_cdf(d(weight, i, strike))
                }
                PayoffKind::Put => {
                    strike * norm_cdf(-d(weight, i, strike))
                        - rho * norm_cdf(-d(weight, i + 1, strike))
                }
                PayoffKind::Forward => rho - strike,
            }
        })
        .collect()
}

/// Unscaled payoff moments `ftilde_i = E_w[F(x) x^i]` for a unit initial price.
pub fn payoff_moments(
    weight: &WeightParams,
    strike: f64,
    degree: usize,
    kind: PayoffKind,
) -> Vec<f64> {
    scaled_payoff_vector(weight, strike, degree, kind)
        .into_iter()
        .enumerate()
        .map(|(i, v)| v * weight.moment(i))
        .collect()
}

/// `f = e^{-rT} P fbar`, scaled to the market's initial price.
///
/// The weight refers to the normalized average `A_T / S0`.
pub fn payoff_coefficients(
    market: &MarketParams,
    weight: &WeightParams,
    basis: &OrthonormalBasis,
    kind: PayoffKind,
) -> Result<Vec<f64>> {
    market.validate()?;
    let norm = market.normalized();
    let fbar = scaled_payoff_vector(weight, norm.strike, basis.degree(), kind);
    let scale = market.discount() * market.spot;
    Ok(mat_vec(basis.scaled_coefficients(), &fbar)
        .into_iter()
        .map(|v| v * scale)
        .collect())
}

/// `ell = P h` for relative moments `h`.
pub fn likelihood_coefficients(
    moments: &MomentVector,
    basis: &OrthonormalBasis,
) -> Result<Vec<f64>> {
    if moments.kind != MomentKind::Relative {
        return Err(Error::invalid(
            Stage::Pricer,
            "likelihood coefficients need relative moments",
        ));
    }
    if moments.degree() != basis.degree() {
        return Err(Error::invalid(
            Stage::Pricer,
            format!(
                "moment degree {} differs from basis degree {}",
                moments.degree(),
                basis.degree()
            ),
        ));
    }
    let ell = mat_vec(basis.scaled_coefficients(), &moments.values);
    if let Some(n) = ell.iter().position(|v| !v.is_finite()) {
        return Err(Error::Overflow {
            stage: Stage::Pricer,
            degree: n,
        });
    }
    Ok(ell)
}

/// Closed-form `||F||_w^2` of the discounted call payoff, in currency units squared.
pub fn payoff_norm_sq(market: &MarketParams, weight: &WeightParams) -> f64 {
    payoff_norm_sq_of(market, weight, PayoffKind::Call)
}

pub fn payoff_norm_sq_of(market: &MarketParams, weight: &WeightParams, kind: PayoffKind) -> f64 {
    let k = market.strike / market.spot;
    let (s1, s2) = (weight.moment(1), weight.moment(2));
    let raw = match kind {
        PayoffKind::Call => {
            s2 * norm_cdf(d(weight, 2, k)) - 2.0 * k * s1 * norm_cdf(d(weight, 1, k))
                + k * k * norm_cdf(d(weight, 0, k))
        }
        PayoffKind::Put => {
            k * k * norm_cdf(-d(weight, 0, k)) - 2.0 * k * s1 * norm_cdf(-d(weight, 1, k))
                + s2 * norm_cdf(-d(weight, 2, k))
        }
        PayoffKind::Forward => s2 - 2.0 * k * s1 + k * k,
    };
    let scale = market.discount() * market.spot;
    raw * scale * scale
}

fn mat_vec(p: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..p.nrows())
        .map(|n| (0..=n).map(|k| p[(n, k)] * v[k]).sum())
        .collect()
}

fn abs_mat_vec(p: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..p.nrows())
        .map(|n| (0..=n).map(|k| (p[(n, k)] * v[k]).abs()).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingOptions {
    pub method: BasisMethod,
    /// Weight for the normalized average; `None` selects [`default_weight`].
    pub weight: Option<WeightParams>,
    /// Drop the tail of the series once its terms are below their rounding noise.
    pub truncate_at_noise: bool,
    pub kind: PayoffKind,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions {
            method: BasisMethod::Auto,
            weight: None,
            truncate_at_noise: true,
            kind: PayoffKind::Call,
        }
    }
}

/// Truncated series `pi^(N) = sum f_n ell_n` together with its ingredients.
#[derive(Debug, Clone)]
pub struct SeriesApproximation {
    pub order: usize,
    /// Highest order actually summed; below `order` only when the remaining
    /// terms are dominated by rounding noise.
    pub effective_order: usize,
    pub kind: PayoffKind,
    /// Payoff coefficients, currency units.
    pub f: Vec<f64>,
    /// Likelihood coefficients of the normalized average.
    pub ell: Vec<f64>,
    pub price: f64,
    pub payoff_norm_sq: f64,
    pub eps_f: f64,
    /// Rounding-noise bound of each term `f_n ell_n`.
    pub term_noise: Vec<f64>,
    pub weight: WeightParams,
    pub market: MarketParams,
    pub rcond: f64,
    truncate: bool,
    basis: OrthonormalBasis,
    relative_moments: MomentVector,
}

pub fn price(
    market: &MarketParams,
    order: usize,
    weight: Option<WeightParams>,
) -> Result<SeriesApproximation> {
    price_with(
        market,
        order,
        &PricingOptions {
            weight,
            ..PricingOptions::default()
        },
    )
}

pub fn price_with(
    market: &MarketParams,
    order: usize,
    opts: &PricingOptions,
) -> Result<SeriesApproximation> {
    market.validate()?;
    if order > MAX_ORDER {
        return Err(Error::invalid(
            Stage::Pricer,
            format!("truncation order {order} exceeds the maximum {MAX_ORDER}"),
        ));
    }
    let norm = market.normalized();
    let weight = match opts.weight {
        Some(w) => WeightParams::new(w.mu, w.nu)?,
        None => default_weight(&norm, norm.first_moment())?,
    };
    let h = series_moments(&norm, order, &weight)?;
    let basis = orthonormal_basis(&weight, order, opts.method)?;
    let ell = likelihood_coefficients(&h, &basis)?;
    let rcond = gram(&weight, order, GramForm::Scaled).rcond();
    Ok(assemble(
        market,
        opts.kind,
        opts.truncate_at_noise,
        weight,
        basis,
        h,
        ell,
        rcond,
    ))
}

/// Relative moments up to `order`, taken from the exponential at [`MAX_ORDER`]
/// whenever that is representable. Rounding in the exponential depends on the
/// matrix size, so this keeps `ell_n` identical across truncation orders.
fn series_moments(
    norm: &MarketParams,
    order: usize,
    weight: &WeightParams,
) -> Result<MomentVector> {
    match moments(norm, MAX_ORDER, Some(weight), MomentKind::Relative) {
        Ok(mut h) => {
            h.values.truncate(order + 1);
            Ok(h)
        }
        Err(Error::Overflow { .. }) => moments(norm, order, Some(weight), MomentKind::Relative),
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    market: &MarketParams,
    kind: PayoffKind,
    truncate: bool,
    weight: WeightParams,
    basis: OrthonormalBasis,
    relative_moments: MomentVector,
    ell: Vec<f64>,
    rcond: f64,
) -> SeriesApproximation {
    let order = basis.degree();
    let norm = market.normalized();
    let scale = market.discount() * market.spot;
    let p = basis.scaled_coefficients();
    let fbar = scaled_payoff_vector(&weight, norm.strike, order, kind);
    let f: Vec<f64> = mat_vec(p, &fbar).into_iter().map(|v| v * scale).collect();

    let dl = abs_mat_vec(p, &relative_moments.values);
    let df = abs_mat_vec(p, &fbar);
    let term_noise: Vec<f64> = (0..=order)
        .map(|n| NOISE_EPS * (f[n].abs() * dl[n] + ell[n].abs() * df[n] * scale))
        .collect();
    let lead = (f[0] * ell[0]).abs();
    let effective_order = if truncate {
        (2..=order)
            .find(|&n| {
                let term = (f[n] * ell[n]).abs();
                term_noise[n] > term && term_noise[n] > NOISE_FLOOR * lead
            })
            .map_or(order, |n| n - 1)
    } else {
        order
    };

    let payoff_norm_sq = payoff_norm_sq_of(market, &weight, kind);
    let mut price: f64 = (0..=effective_order).map(|n| f[n] * ell[n]).sum();
    let mut eps_f = payoff_norm_sq - (0..=effective_order).map(|n| f[n] * f[n]).sum::<f64>();
    // Affine payoffs lie in the span of {b_0, b_1}: the projection is exact.
    let affine = kind == PayoffKind::Forward || (kind == PayoffKind::Call && norm.strike == 0.0);
    if affine && order >= 1 {
        price = scale * (norm.first_moment() - norm.strike);
        eps_f = 0.0;
    }
    if kind == PayoffKind::Put && norm.strike == 0.0 {
        price = 0.0;
        eps_f = 0.0;
    }
    SeriesApproximation {
        order,
        effective_order,
        kind,
        f,
        ell,
        price,
        payoff_norm_sq,
        eps_f,
        term_noise,
        weight,
        market: *market,
        rcond,
        truncate,
        basis,
        relative_moments,
    }
}

impl SeriesApproximation {
    pub fn basis(&self) -> &OrthonormalBasis {
        &self.basis
    }

    pub fn relative_moments(&self) -> &MomentVector {
        &self.relative_moments
    }

    /// `pi^(n)` for `n <= order`, summing at most `effective_order` terms.
    pub fn partial_price(&self, n: usize) -> f64 {
        let n = n.min(self.effective_order);
        (0..=n).map(|k| self.f[k] * self.ell[k]).sum()
    }

    /// `|pi^(N) - pi^(N-1)|`, a heuristic convergence indicator (not an error bound).
    pub fn convergence(&self) -> Option<f64> {
        if self.order == 0 {
            return None;
        }
        Some((self.partial_price(self.order) - self.partial_price(self.order - 1)).abs())
    }

    /// `sum ell_n^2` over the summed terms.
    pub fn likelihood_partial_norm_sq(&self) -> f64 {
        self.ell[..=self.effective_order]
            .iter()
            .map(|l| l * l)
            .sum()
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.rcond < RCOND_WARN
    }

    /// Same market with another strike, reusing moments and basis.
    pub fn reprice_strike(&self, strike: f64) -> Result<SeriesApproximation> {
        let market = MarketParams {
            strike,
            ..self.market
        };
        market.validate()?;
        Ok(assemble(
            &market,
            self.kind,
            self.truncate,
            self.weight,
            self.basis.clone(),
            self.relative_moments.clone(),
            self.ell.clone(),
            self.rcond,
        ))
    }

    /// Human-readable warnings about the regime and the numerics.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.market.tau_warning() {
            out.push(format!("tau={:.2} > 0.5", self.market.tau()));
        }
        if self.order > ORDER_WARN {
            out.push(format!(
                "order {} above {ORDER_WARN}: rounding errors may dominate",
                self.order
            ));
        }
        if self.effective_order < self.order {
            out.push(format!(
                "terms above order {} are below rounding noise and were dropped",
                self.effective_order
            ));
        }
        if self.is_ill_conditioned() {
            out.push(format!(
                "scaled Gram matrix ill-conditioned (rcond {:.1e})",
                self.rcond
            ));
        }
        out
    }

    pub fn density(&self) -> DensityApproximant {
        density_approx(self)
    }
}

/// `g^(N)(x) = w(x) sum ell_n b_n(x)` for the normalized average `x = A_T / S0`.
#[derive(Debug, Clone)]
pub struct DensityApproximant {
    pub order: usize,
    pub weight: WeightParams,
    pub ell: Vec<f64>,
    basis: OrthonormalBasis,
}

/// Density approximant of a series; uses the coefficients up to its effective order.
pub fn density_approx(approx: &SeriesApproximation) -> DensityApproximant {
    DensityApproximant {
        order: approx.effective_order,
        weight: approx.weight,
        ell: approx.ell[..=approx.effective_order].to_vec(),
        basis: approx.basis.clone(),
    }
}

impl DensityApproximant {
    /// May be negative in the tails.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::invalid(
                Stage::Pricer,
                format!("density argument must be positive, got {x}"),
            ));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        let b = self.basis.eval(x);
        let s: f64 = self.ell.iter().zip(&b).map(|(l, b)| l * b).sum();
        weight_density_unchecked(&self.weight, x) * s
    }

    pub fn eval_grid(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    /// Same approximant truncated at a lower order.
    pub fn truncated(&self, order: usize) -> DensityApproximant {
        let order = order.min(self.order);
        DensityApproximant {
            order,
            weight: self.weight,
            ell: self.ell[..=order].to_vec(),
            basis: self.basis.clone(),
        }
    }
}
