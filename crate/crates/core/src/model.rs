//! Black-Scholes market inputs and the moments of the arithmetic average.
//!
//! The process `Y_t = (1/T) * X_t`, where `dX = (rX + 1) dt + sigma X dB`, has the
//! same law at `t = T` as the running average `A_T`. Its generator maps
//! polynomials of degree `n` to polynomials of degree `n`, so the vector of
//! moments `(E[A_T^0], ..., E[A_T^N])` solves a linear ODE with a lower
//! bidiagonal matrix and is obtained as a single matrix exponential.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::WeightParams;
use crate::error::{Error, Result, Stage};

/// Regime above which the log-normal series is not recommended.
pub const TAU_RULE_OF_THUMB: f64 = 0.5;

/// Inputs of one pricing problem.
///
/// The strike may be zero: the payoff then degenerates to the (discounted)
/// average itself, which the pricer handles as a closed-form special case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub r: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    #[serde(rename = "S0")]
    pub spot: f64,
    #[serde(rename = "K")]
    pub strike: f64,
}

impl MarketParams {
    pub fn new(r: f64, sigma: f64, maturity: f64, spot: f64, strike: f64) -> Result<Self> {
        let p = MarketParams {
            r,
            sigma,
            maturity,
            spot,
            strike,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid(Stage::Model, reason));
        if !self.r.is_finite() {
            return bad(format!("short rate must be finite, got {}", self.r));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("volatility must be positive, got {}", self.sigma));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return bad(format!("expiry must be positive, got {}", self.maturity));
        }
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return bad(format!("initial price must be positive, got {}", self.spot));
        }
        if !(self.strike >= 0.0 && self.strike.is_finite()) {
            return bad(format!("strike must be non-negative, got {}", self.strike));
        }
        Ok(())
    }

    /// `sigma^2 * T`, the parameter that governs the accuracy regime.
    pub fn tau(&self) -> f64 {
        self.sigma * self.sigma * self.maturity
    }

    /// Set when `tau` exceeds [`TAU_RULE_OF_THUMB`].
    pub fn tau_warning(&self) -> bool {
        self.tau() > TAU_RULE_OF_THUMB
    }

    /// Same problem with the initial price scaled to one.
    pub fn normalized(&self) -> MarketParams {
        MarketParams {
            spot: 1.0,
            strike: self.strike / self.spot,
            ..*self
        }
    }

    pub fn discount(&self) -> f64 {
        (-self.r * self.maturity).exp()
    }

    /// `E[A_T] / S0 = (e^{rT} - 1) / (rT)`, continuous at `r = 0`.
    pub fn first_moment(&self) -> f64 {
        let x = self.r * self.maturity;
        if x == 0.0 {
            1.0
        } else {
            x.exp_m1() / x
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixForm {
    Raw,
    Scaled,
}

/// Lower bidiagonal generator matrix acting on `(1, x, ..., x^N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub form: MatrixForm,
    matrix: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn degree(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..=self.degree()).map(|n| self.matrix[(n, n)]).collect()
    }

    /// Entries `(n, n-1)` for `n = 1..=N`.
    pub fn subdiagonal(&self) -> Vec<f64> {
        (1..=self.degree())
            .map(|n| self.matrix[(n, n - 1)])
            .collect()
    }
}

/// Eigenvalue `n r + n(n-1) sigma^2 / 2` of the generator on `x^n`.
pub fn generator_eigenvalue(market: &MarketParams, n: usize) -> f64 {
    let n = n as f64;
    n * market.r + 0.5 * n * (n - 1.0) * market.sigma * market.sigma
}

pub fn generator(
    market: &MarketParams,
    degree: usize,
    form: MatrixForm,
    weight: Option<&WeightParams>,
) -> Result<GeneratorMatrix> {
    market.validate()?;
    let weight = match (form, weight) {
        (MatrixForm::Scaled, None) => {
            return Err(Error::invalid(
                Stage::Model,
                "the scaled generator needs weight parameters",
            ))
        }
        (_, w) => w,
    };
    let t = market.maturity;
    let mut g = DMatrix::<f64>::zeros(degree + 1, degree + 1);
    for n in 0..=degree {
        g[(n, n)] = generator_eigenvalue(market, n);
        if n > 0 {
            let nf = n as f64;
            g[(n, n - 1)] = match form {
                MatrixForm::Raw => nf / t,
                MatrixForm::Scaled => {
                    // s_{n-1} / s_n
                    let w = weight.expect("checked above");
                    let nu_sq = w.nu_sq();
                    nf / t * (-w.mu + 0.5 * (1.0 - 2.0 * nf) * nu_sq).exp()
                }
            };
        }
    }
    Ok(GeneratorMatrix { form, matrix: g })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentKind {
    /// `E[A_T^n]` (with `S0 = 1`).
    Raw,
    /// `E[A_T^n] / s_n` with `s_n` the `n`-th moment of the weight.
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub kind: MomentKind,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn degree(&self) -> usize {
        self.values.len() - 1
    }
}

/// Moments of the normalized average `A_T / S0` up to degree `N`.
///
/// Computed as the first column of `exp(G T)` (raw) or `exp(G_scaled T)`
/// (relative). The relative kind stays in range for large `N`; the raw kind
/// reports [`Error::Overflow`] as soon as a moment is not representable.
pub fn moments(
    market: &MarketParams,
    degree: usize,
    weight: Option<&WeightParams>,
    kind: MomentKind,
) -> Result<MomentVector> {
    let form = match kind {
        MomentKind::Raw => MatrixForm::Raw,
        MomentKind::Relative => MatrixForm::Scaled,
    };
    let g = generator(market, degree, form, weight)?;
    let column = expm_first_column(&(g.matrix * market.maturity));
    let mut values: Vec<f64> = column.iter().copied().collect();
    values[0] = 1.0;
    if let Some(n) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Overflow {
            stage: Stage::Model,
            degree: n,
        });
    }
    Ok(MomentVector { kind, values })
}

/// `exp(A) e_0` by scaling and squaring with a Pade approximant of the full matrix.
fn expm_first_column(a: &DMatrix<f64>) -> DVector<f64> {
    // Lower triangular with real spectrum on the diagonal: the Pade scheme is
    // insensitive to repeated eigenvalues (e.g. lambda_1 = lambda_2 when r = -sigma^2).
    a.clone().exp().column(0).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market(r: f64, sigma: f64, t: f64) -> MarketParams {
        MarketParams::new(r, sigma, t, 1.0, 1.0).unwrap()
    }

    #[test]
    fn raw_generator_small_cases() {
        let g = generator(&market(0.0, 0.1, 1.0), 1, MatrixForm::Raw, None).unwrap();
        assert_eq!(g.matrix().as_slice(), &[0.0, 1.0, 0.0, 0.0]);

        let g = generator(&market(0.05, 0.5, 2.0), 2, MatrixForm::Raw, None).unwrap();
        let d = g.diagonal();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 0.05).abs() < 1e-15);
        assert!((d[2] - 0.35).abs() < 1e-15);
        assert_eq!(g.subdiagonal(), vec![0.5, 1.0]);
        // nothing outside the two bands
        for i in 0..3 {
            for j in 0..3 {
                if j > i || i > j + 1 {
                    assert_eq!(g.matrix()[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn scaled_generator_subdiagonal() {
        let w = WeightParams::new(-0.1, 0.36).unwrap();
        let m = market(0.05, 0.5, 1.0);
        let g = generator(&m, 2, MatrixForm::Scaled, Some(&w)).unwrap();
        let nu_sq: f64 = 0.36 * 0.36;
        let sub = g.subdiagonal();
        assert!((sub[0] / (0.1 - 0.5 * nu_sq).exp() - 1.0).abs() < 1e-14);
        assert!((sub[1] / (2.0 * (0.1 - 1.5 * nu_sq).exp()) - 1.0).abs() < 1e-14);
        assert_eq!(
            g.diagonal(),
            generator(&m, 2, MatrixForm::Raw, None).unwrap().diagonal()
        );
    }

    #[test]
    fn scaled_form_requires_weight() {
        let err = generator(&market(0.0, 0.2, 1.0), 3, MatrixForm::Scaled, None).unwrap_err();
        assert!(matches!(err, Error::InvalidInput { .. }));
        assert!(moments(&market(0.0, 0.2, 1.0), 3, None, MomentKind::Relative).is_err());
    }

    #[test]
    fn first_moment_closed_form() {
        let m = moments(&market(0.0, 0.3, 1.0), 1, None, MomentKind::Raw).unwrap();
        assert_eq!(m.values[0], 1.0);
        assert!((m.values[1] - 1.0).abs() < 1e-15);

        let mk = market(0.05, 0.5, 1.0);
        let m = moments(&mk, 1, None, MomentKind::Raw).unwrap();
        let expected = (0.05f64.exp() - 1.0) / 0.05;
        assert!((m.values[1] / expected - 1.0).abs() < 1e-14);
        assert!((expected - 1.025_421_9).abs() < 1e-7);
    }

    #[test]
    fn raw_moments_overflow_is_reported() {
        // lambda_N T is far beyond the exponent range of f64
        let err = moments(&market(0.1, 1.5, 10.0), 40, None, MomentKind::Raw).unwrap_err();
        assert!(matches!(err, Error::Overflow { .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn market_validation() {
        assert!(MarketParams::new(0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(MarketParams::new(0.0, 0.2, -1.0, 1.0, 1.0).is_err());
        assert!(MarketParams::new(0.0, 0.2, 1.0, 0.0, 1.0).is_err());
        assert!(MarketParams::new(0.0, 0.2, 1.0, 1.0, -1.0).is_err());
        assert!(MarketParams::new(-0.03, 0.2, 1.0, 1.0, 0.0).is_ok());
        let m = MarketParams::new(0.05, 1.0, 1.0, 2.0, 2.0).unwrap();
        assert!(m.tau_warning());
        assert!(!MarketParams::new(0.05, 0.5, 2.0, 2.0, 2.0)
            .unwrap()
            .tau_warning());
    }
}
