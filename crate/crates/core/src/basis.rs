//! Log-normal weight, Gram matrices and orthonormal polynomial bases.
//!
//! Polynomials are stored in *scaled* coordinates: row `n` of the coefficient
//! matrix `P` holds `b_n(x) = sum_k P[n][k] * x^k / s_k`, where
//! `s_k = e^{k mu + k^2 nu^2 / 2}` is the `k`-th moment of the weight. In these
//! coordinates the Gram matrix is `Mbar_ij = q^{ij}` with `q = e^{nu^2}`, which
//! depends on `nu` only and keeps every entry of `P` of moderate size.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result, Stage};
use crate::model::MarketParams;

/// Reciprocal condition estimate below which a Gram matrix is flagged.
pub const RCOND_WARN: f64 = 1e-13;

/// Above this `nu^2` the automatic method goes straight to the recurrence.
pub const AUTO_RECURRENCE_NU_SQ: f64 = 1.0;

/// Parameters `(mu, nu)` of the log-normal weight `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub mu: f64,
    pub nu: f64,
}

impl WeightParams {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::invalid(
                Stage::Basis,
                format!("mu must be finite, got {mu}"),
            ));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(
                Stage::Basis,
                format!("nu must be positive, got {nu}"),
            ));
        }
        Ok(WeightParams { mu, nu })
    }

    pub fn from_nu_sq(mu: f64, nu_sq: f64) -> Result<Self> {
        if !(nu_sq > 0.0) {
            return Err(Error::invalid(
                Stage::Basis,
                format!("nu^2 must be positive, got {nu_sq}"),
            ));
        }
        Self::new(mu, nu_sq.sqrt())
    }

    pub fn nu_sq(&self) -> f64 {
        self.nu * self.nu
    }

    /// `log s_n = n mu + n^2 nu^2 / 2`.
    pub fn log_moment(&self, n: usize) -> f64 {
        let n = n as f64;
        n * self.mu + 0.5 * n * n * self.nu_sq()
    }

    /// `s_n = E_w[x^n]`.
    pub fn moment(&self, n: usize) -> f64 {
        self.log_moment(n).exp()
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.nu_sq()).exp()
    }

    /// Smallest `nu^2` for which the likelihood ratio `g / w` is square integrable.
    pub fn square_integrability_threshold(market: &MarketParams) -> f64 {
        0.5 * market.tau()
    }

    pub fn check_square_integrable(&self, market: &MarketParams, stage: Stage) -> Result<()> {
        let threshold = Self::square_integrability_threshold(market);
        if self.nu_sq() > threshold {
            Ok(())
        } else {
            Err(Error::NotSquareIntegrable {
                stage,
                nu_sq: self.nu_sq(),
                threshold,
            })
        }
    }
}

/// Weight matched to the average: `nu^2 = sigma^2 T / 2 + 1e-4` and `mu` chosen
/// so that the mean of `w` equals `first_moment`.
pub fn default_weight(market: &MarketParams, first_moment: f64) -> Result<WeightParams> {
    market.validate()?;
    if !(first_moment > 0.0 && first_moment.is_finite()) {
        return Err(Error::invalid(
            Stage::Basis,
            format!("first moment must be positive, got {first_moment}"),
        ));
    }
    let nu_sq = 0.5 * market.tau() + 1e-4;
    WeightParams::from_nu_sq(first_moment.ln() - 0.5 * nu_sq, nu_sq)
}

/// Log-normal density `w(x)`.
pub fn weight_density(weight: &WeightParams, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::invalid(
            Stage::Basis,
            format!("density argument must be positive, got {x}"),
        ));
    }
    Ok(weight_density_unchecked(weight, x))
}

pub(crate) fn weight_density_unchecked(weight: &WeightParams, x: f64) -> f64 {
    let z = (x.ln() - weight.mu) / weight.nu;
    (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * weight.nu * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramForm {
    Raw,
    Scaled,
}

/// Gram matrix of the monomials under `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub form: GramForm,
    pub weight: WeightParams,
    matrix: DMatrix<f64>,
}

pub fn gram(weight: &WeightParams, degree: usize, form: GramForm) -> GramMatrix {
    let nu_sq = weight.nu_sq();
    let matrix = DMatrix::from_fn(degree + 1, degree + 1, |i, j| match form {
        GramForm::Raw => weight.moment(i + j),
        GramForm::Scaled => ((i * j) as f64 * nu_sq).exp(),
    });
    GramMatrix {
        form,
        weight: *weight,
        matrix,
    }
}

impl GramMatrix {
    pub fn degree(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Plain Cholesky factorization in floating point.
    ///
    /// Fails with the index of the first non-positive pivot. For small `nu` the
    /// scaled matrix is numerically singular well before `N = 20`; the closed
    /// form used by [`orthonormal_basis`] does not have this limitation.
    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        let n = self.matrix.nrows();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = self.matrix[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::CholeskyBreakdown { pivot: j });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self.matrix[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Lower bound on the 1-norm reciprocal condition number.
    ///
    /// Uses the exact inverse factor `P` (so that `M^-1 = P^T P`) and bounds
    /// `||M^-1||_1 <= || |P|^T |P| ||_1`. Non-increasing in `N`.
    pub fn rcond(&self) -> f64 {
        let n = self.degree();
        let mut p = match scaled_inverse_factor(self.weight.nu_sq(), n) {
            Ok(p) => p,
            Err(_) => return 0.0,
        };
        if self.form == GramForm::Raw {
            for k in 0..=n {
                let s = self.weight.moment(k);
                p.column_mut(k).unscale_mut(s);
            }
        }
        let p = p.abs();
        let inv_bound = (p.transpose() * &p)
            .column_iter()
            .map(|c| c.sum())
            .fold(0.0, f64::max);
        let norm = self
            .matrix
            .column_iter()
            .map(|c| c.abs().sum())
            .fold(0.0, f64::max);
        let r = 1.0 / (norm * inv_bound);
        if r.is_finite() {
            r
        } else {
            0.0
        }
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.rcond() < RCOND_WARN
    }
}

/// `ln(q^m - 1)` with `q = e^{nu^2}`.
fn ln_qm1(m: usize, nu_sq: f64) -> f64 {
    (m as f64 * nu_sq).exp_m1().ln()
}

/// Log of the Gaussian binomial `[i, k]_q`.
fn ln_q_binomial(i: usize, k: usize, nu_sq: f64) -> f64 {
    (1..=k)
        .map(|j| ln_qm1(i - k + j, nu_sq) - ln_qm1(j, nu_sq))
        .sum()
}

/// Log of the `k`-th pivot `D_k = q^{k(k-1)/2} prod_{j<=k} (q^j - 1)` of `Mbar = L_q D L_q^T`.
fn ln_pivot(k: usize, nu_sq: f64) -> f64 {
    let kf = k as f64;
    0.5 * kf * (kf - 1.0) * nu_sq + (1..=k).map(|j| ln_qm1(j, nu_sq)).sum::<f64>()
}

/// Cholesky factor `Lbar` of the scaled Gram matrix, entrywise in closed form.
///
/// `Mbar_ij = q^{ij}` factors as `L_q D L_q^T` with `L_q[i][k]` the Gaussian
/// binomial `[i, k]_q`, so every entry is a product of `q^m - 1` terms and is
/// obtained to full relative precision regardless of conditioning.
pub fn scaled_cholesky_factor(nu_sq: f64, degree: usize) -> Result<DMatrix<f64>> {
    let mut l = DMatrix::<f64>::zeros(degree + 1, degree + 1);
    for i in 0..=degree {
        for k in 0..=i {
            let v = (ln_q_binomial(i, k, nu_sq) + 0.5 * ln_pivot(k, nu_sq)).exp();
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::CholeskyBreakdown { pivot: i });
            }
            l[(i, k)] = v;
        }
    }
    Ok(l)
}

/// Inverse `P = Lbar^-1`, also in closed form:
/// `(L_q^-1)[i][k] = (-1)^{i-k} q^{(i-k)(i-k-1)/2} [i, k]_q`.
pub fn scaled_inverse_factor(nu_sq: f64, degree: usize) -> Result<DMatrix<f64>> {
    let mut p = DMatrix::<f64>::zeros(degree + 1, degree + 1);
    for i in 0..=degree {
        let ln_d = 0.5 * ln_pivot(i, nu_sq);
        for k in 0..=i {
            let m = (i - k) as f64;
            let ln_abs = ln_q_binomial(i, k, nu_sq) + 0.5 * m * (m - 1.0) * nu_sq - ln_d;
            let v = ln_abs.exp();
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::CholeskyBreakdown { pivot: i });
            }
            p[(i, k)] = if (i - k) % 2 == 0 { v } else { -v };
        }
    }
    Ok(p)
}

/// Coefficients of `b_{n+1} = ((x - alpha_n) b_n - beta_n b_{n-1}) / beta_{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceCoefficients {
    /// `alpha_0 .. alpha_{N-1}`.
    pub alpha: Vec<f64>,
    /// `beta_1 .. beta_N` (stored from index 0).
    pub beta: Vec<f64>,
}

impl RecurrenceCoefficients {
    pub fn degree(&self) -> usize {
        self.beta.len()
    }
}

/// Recurrence coefficients of the orthonormal polynomials of `w`, in closed form.
pub fn recurrence_coefficients(weight: &WeightParams, degree: usize) -> RecurrenceCoefficients {
    let (mu, nu_sq) = (weight.mu, weight.nu_sq());
    let alpha = (0..degree)
        .map(|n| {
            let n = n as f64;
            // e^{mu + nu^2 (n - 1/2)} (q^{n+1} + q^n - 1), split so that alpha_0 is the mean
            (mu + nu_sq * (2.0 * n + 0.5)).exp()
                + (mu + nu_sq * (n - 0.5)).exp() * (nu_sq * n).exp_m1()
        })
        .collect();
    let beta = (1..=degree)
        .map(|n| {
            let nf = n as f64;
            (mu + 0.5 * nu_sq * (3.0 * nf - 2.0) + 0.5 * ln_qm1(n, nu_sq)).exp()
        })
        .collect();
    RecurrenceCoefficients { alpha, beta }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisMethod {
    CholeskyScaled,
    Recurrence,
    Auto,
}

/// Orthonormal polynomials `b_0 .. b_N` of `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    pub weight: WeightParams,
    /// The construction actually used (never `Auto`).
    pub method: BasisMethod,
    coeffs: DMatrix<f64>,
    factor: Option<DMatrix<f64>>,
    recurrence: RecurrenceCoefficients,
}

pub fn orthonormal_basis(
    weight: &WeightParams,
    degree: usize,
    method: BasisMethod,
) -> Result<OrthonormalBasis> {
    let recurrence = recurrence_coefficients(weight, degree);
    let nu_sq = weight.nu_sq();
    let cholesky = || -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((
            scaled_inverse_factor(nu_sq, degree)?,
            scaled_cholesky_factor(nu_sq, degree)?,
        ))
    };
    let (method, coeffs, factor) = match method {
        BasisMethod::CholeskyScaled => {
            let (p, l) = cholesky()?;
            (BasisMethod::CholeskyScaled, p, Some(l))
        }
        BasisMethod::Recurrence => (
            BasisMethod::Recurrence,
            recurrence_to_scaled(weight, &recurrence)?,
            None,
        ),
        BasisMethod::Auto => match cholesky() {
            Ok((p, l)) if nu_sq <= AUTO_RECURRENCE_NU_SQ => {
                (BasisMethod::CholeskyScaled, p, Some(l))
            }
            _ => (
                BasisMethod::Recurrence,
                recurrence_to_scaled(weight, &recurrence)?,
                None,
            ),
        },
    };
    Ok(OrthonormalBasis {
        weight: *weight,
        method,
        coeffs,
        factor,
        recurrence,
    })
}

/// Expands the recurrence into scaled monomial coefficients, using
/// `x * x^k / s_k = (s_{k+1} / s_k) * x^{k+1} / s_{k+1}`.
fn recurrence_to_scaled(
    weight: &WeightParams,
    rc: &RecurrenceCoefficients,
) -> Result<DMatrix<f64>> {
    let n = rc.degree();
    let (mu, nu_sq) = (weight.mu, weight.nu_sq());
    let mut p = DMatrix::<f64>::zeros(n + 1, n + 1);
    p[(0, 0)] = 1.0;
    for m in 0..n {
        let (a, b_next) = (rc.alpha[m], rc.beta[m]);
        let b_prev = if m > 0 { rc.beta[m - 1] } else { 0.0 };
        for k in 0..=m + 1 {
            let mut v = 0.0;
            if k > 0 {
                let ratio = (mu + 0.5 * (2.0 * (k - 1) as f64 + 1.0) * nu_sq).exp();
                v += ratio * p[(m, k - 1)];
            }
            if k <= m {
                v -= a * p[(m, k)];
            }
            if m > 0 && k < m {
                v -= b_prev * p[(m - 1, k)];
            }
            p[(m + 1, k)] = v / b_next;
        }
        if p.row(m + 1).iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow {
                stage: Stage::Basis,
                degree: m + 1,
            });
        }
    }
    Ok(p)
}

impl OrthonormalBasis {
    pub fn degree(&self) -> usize {
        self.coeffs.nrows() - 1
    }

    /// `P` with `b_n(x) = sum_k P[n][k] x^k / s_k`; equals `Lbar^-1`.
    pub fn scaled_coefficients(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// Ordinary monomial coefficients `P[n][k] / s_k` (the rows of `L^-1`).
    pub fn monomial_coefficients(&self) -> DMatrix<f64> {
        let mut c = self.coeffs.clone();
        for k in 0..=self.degree() {
            c.column_mut(k).unscale_mut(self.weight.moment(k));
        }
        c
    }

    /// Leading coefficient of each `b_n` in scaled coordinates (all positive).
    pub fn leading_coefficients(&self) -> Vec<f64> {
        (0..=self.degree()).map(|n| self.coeffs[(n, n)]).collect()
    }

    /// `Lbar` when built by the Cholesky route.
    pub fn cholesky_factor(&self) -> Option<&DMatrix<f64>> {
        self.factor.as_ref()
    }

    pub fn recurrence(&self) -> &RecurrenceCoefficients {
        &self.recurrence
    }

    /// `(b_0(x), ..., b_N(x))`, evaluated by the three-term recurrence.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let rc = &self.recurrence;
        let n = self.degree();
        let mut b = Vec::with_capacity(n + 1);
        b.push(1.0);
        for m in 0..n {
            let prev = if m > 0 {
                rc.beta[m - 1] * b[m - 1]
            } else {
                0.0
            };
            b.push(((x - rc.alpha[m]) * b[m] - prev) / rc.beta[m]);
        }
        b
    }

    /// `P Mbar P^T - I`, which vanishes for an exactly orthonormal basis.
    pub fn gram_residual(&self) -> DMatrix<f64> {
        let m = gram(&self.weight, self.degree(), GramForm::Scaled);
        let n = self.degree() + 1;
        &self.coeffs * m.matrix() * self.coeffs.transpose() - DMatrix::<f64>::identity(n, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_weight_examples() {
        let m = MarketParams::new(0.0, 0.1, 1.0, 1.0, 1.0).unwrap();
        let w = default_weight(&m, 1.0).unwrap();
        assert_relative_eq!(w.nu_sq(), 0.0051, max_relative = 1e-14);
        assert_relative_eq!(w.mu, -0.00255, max_relative = 1e-12);
        assert_relative_eq!(w.mean(), 1.0, max_relative = 1e-15);

        let m = MarketParams::new(0.05, 1.0, 1.0, 1.0, 1.0).unwrap();
        let w = default_weight(&m, m.first_moment()).unwrap();
        assert_relative_eq!(w.nu_sq(), 0.5001, max_relative = 1e-14);
        assert!(default_weight(&m, 0.0).is_err());
    }

    #[test]
    fn gram_examples() {
        let w = WeightParams::new(0.0, 1.0).unwrap();
        let g = gram(&w, 1, GramForm::Raw);
        assert_eq!(g.matrix()[(0, 0)], 1.0);
        assert_relative_eq!(g.matrix()[(0, 1)], 0.5f64.exp(), max_relative = 1e-15);
        assert_eq!(g.matrix()[(0, 1)], g.matrix()[(1, 0)]);
        assert_relative_eq!(g.matrix()[(1, 1)], 2.0f64.exp(), max_relative = 1e-15);

        for mu in [-1.0, 0.0, 3.0] {
            let g = gram(&WeightParams::new(mu, 0.3).unwrap(), 1, GramForm::Scaled);
            assert_eq!(g.matrix().as_slice()[..3], [1.0, 1.0, 1.0]);
            assert_relative_eq!(g.matrix()[(1, 1)], 0.09f64.exp(), max_relative = 1e-15);
        }
    }

    #[test]
    fn numeric_cholesky_reports_pivot() {
        let w = WeightParams::from_nu_sq(0.0, 0.0051).unwrap();
        let g = gram(&w, 20, GramForm::Scaled);
        match g.cholesky() {
            Err(Error::CholeskyBreakdown { pivot }) => assert!(pivot > 0 && pivot <= 20),
            other => panic!("expected breakdown, got {other:?}"),
        }
        let g = gram(&WeightParams::new(0.0, 0.8).unwrap(), 6, GramForm::Scaled);
        let l = g.cholesky().unwrap();
        let closed = scaled_cholesky_factor(g.weight.nu_sq(), 6).unwrap();
        for i in 0..7 {
            for k in 0..=i {
                assert_relative_eq!(l[(i, k)], closed[(i, k)], max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn closed_form_factor_reproduces_gram() {
        let l = scaled_cholesky_factor(0.25, 8).unwrap();
        let m = gram(&WeightParams::new(0.0, 0.5).unwrap(), 8, GramForm::Scaled);
        let back = &l * l.transpose();
        for i in 0..9 {
            for j in 0..9 {
                assert_relative_eq!(back[(i, j)], m.matrix()[(i, j)], max_relative = 1e-13);
            }
        }
        let p = scaled_inverse_factor(0.25, 8).unwrap();
        assert!((&p * &l - DMatrix::identity(9, 9)).abs().max() < 1e-11);
    }

    #[test]
    fn first_polynomials() {
        let w = WeightParams::new(-0.2, 0.4).unwrap();
        let basis = orthonormal_basis(&w, 1, BasisMethod::Auto).unwrap();
        let mean = (-0.2f64 + 0.08).exp();
        let beta1 = mean * 0.16f64.exp_m1().sqrt();
        assert_eq!(basis.recurrence().alpha[0], mean);
        assert_relative_eq!(basis.recurrence().beta[0], beta1, max_relative = 1e-14);
        for x in [0.3, 1.0, 2.5] {
            let b = basis.eval(x);
            assert_eq!(b[0], 1.0);
            assert_relative_eq!(b[1], (x - mean) / beta1, max_relative = 1e-13);
            let c = basis.monomial_coefficients();
            assert_relative_eq!(
                c[(1, 0)] + c[(1, 1)] * x,
                b[1],
                max_relative = 1e-12,
                epsilon = 1e-14
            );
        }
        let b0 = orthonormal_basis(&w, 0, BasisMethod::CholeskyScaled).unwrap();
        assert_eq!(b0.eval(7.0), vec![1.0]);
    }

    #[test]
    fn methods_agree_at_moderate_nu() {
        let w = WeightParams::new(0.0, 0.5).unwrap();
        let a = orthonormal_basis(&w, 6, BasisMethod::CholeskyScaled).unwrap();
        let b = orthonormal_basis(&w, 6, BasisMethod::Recurrence).unwrap();
        for i in 0..7 {
            for k in 0..=i {
                let (x, y) = (
                    a.scaled_coefficients()[(i, k)],
                    b.scaled_coefficients()[(i, k)],
                );
                assert_relative_eq!(x, y, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn auto_switches_for_wide_weights() {
        let w = WeightParams::from_nu_sq(0.0, 1.5).unwrap();
        let b = orthonormal_basis(&w, 4, BasisMethod::Auto).unwrap();
        assert_eq!(b.method, BasisMethod::Recurrence);
        assert!(b.cholesky_factor().is_none());
        let w = WeightParams::from_nu_sq(0.0, 0.2).unwrap();
        assert_eq!(
            orthonormal_basis(&w, 4, BasisMethod::Auto).unwrap().method,
            BasisMethod::CholeskyScaled
        );
    }

    #[test]
    fn weight_density_values() {
        let w = WeightParams::new(0.0, 1.0).unwrap();
        assert_relative_eq!(
            weight_density(&w, 1.0).unwrap(),
            0.398_942_280_401_432_7,
            max_relative = 1e-15
        );
        let w = WeightParams::new(0.3, 0.2).unwrap();
        let mode = weight_density(&w, 0.3f64.exp()).unwrap();
        assert_relative_eq!(
            mode,
            1.0 / ((2.0 * PI).sqrt() * 0.2 * 0.3f64.exp()),
            max_relative = 1e-15
        );
        assert!(weight_density(&w, 0.0).is_err());
        assert!(weight_density(&w, -1.0).is_err());
    }

    #[test]
    fn rcond_is_monotone() {
        let w = WeightParams::from_nu_sq(0.0, 0.0051).unwrap();
        let mut last = f64::INFINITY;
        for n in 0..=20 {
            let r = gram(&w, n, GramForm::Scaled).rcond();
            assert!(r <= last, "n={n}");
            last = r;
        }
        assert!(gram(&w, 10, GramForm::Scaled).is_ill_conditioned());
        assert!(!gram(&w, 1, GramForm::Scaled).is_ill_conditioned());
    }

    #[test]
    fn square_integrability_check() {
        let m = MarketParams::new(0.05, 1.0, 1.0, 2.0, 2.0).unwrap();
        let ok = WeightParams::from_nu_sq(0.0, 0.5001).unwrap();
        assert!(ok.check_square_integrable(&m, Stage::MonteCarlo).is_ok());
        let bad = WeightParams::from_nu_sq(0.0, 0.49).unwrap();
        assert!(matches!(
            bad.check_square_integrable(&m, Stage::MonteCarlo),
            Err(Error::NotSquareIntegrable { .. })
        ));
    }
}
