//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use asian_lns::MarketParams;
use nalgebra::{DMatrix, SymmetricEigen};

/// The seven benchmark parameterizations `(r, sigma, T, S0)`, all with `K = 2`.
pub const CASES: [(f64, f64, f64, f64); 7] = [
    (0.02, 0.10, 1.0, 2.0),
    (0.18, 0.30, 1.0, 2.0),
    (0.0125, 0.25, 2.0, 2.0),
    (0.05, 0.50, 1.0, 1.9),
    (0.05, 0.50, 1.0, 2.0),
    (0.05, 0.50, 1.0, 2.1),
    (0.05, 0.50, 2.0, 2.0),
];

pub fn case(i: usize) -> MarketParams {
    let (r, s, t, s0) = CASES[i - 1];
    MarketParams::new(r, s, t, s0, 2.0).unwrap()
}

/// Classical RK4 on `m' = G m`, `m(0) = e_0`, with the raw bidiagonal generator
/// assembled from scratch.
pub fn rk4_moments(r: f64, sigma: f64, t: f64, degree: usize, step: f64) -> Vec<f64> {
    let n = degree + 1;
    let diag: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            k * r + 0.5 * k * (k - 1.0) * sigma * sigma
        })
        .collect();
    let sub: Vec<f64> = (0..n).map(|k| k as f64 / t).collect();
    let rhs = |m: &[f64], out: &mut [f64]| {
        out[0] = diag[0] * m[0];
        for k in 1..n {
            out[k] = diag[k] * m[k] + sub[k] * m[k - 1];
        }
    };
    let steps = (t / step).round() as usize;
    let h = t / steps as f64;
    let mut m = vec![0.0; n];
    m[0] = 1.0;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    for _ in 0..steps {
        rhs(&m, &mut k1);
        for i in 0..n {
            tmp[i] = m[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = m[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = m[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            m[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    m
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature with absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth > 40 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// `int_0^inf h(x) w(x) dx` for a log-normal `w(mu, nu)`, by substituting
/// `x = e^{mu + nu z}` and integrating `z` over `[-zmax, zmax]`.
pub fn lognormal_expectation(h: &dyn Fn(f64) -> f64, mu: f64, nu: f64, zmax: f64, tol: f64) -> f64 {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    integrate(&|z| h((mu + nu * z).exp()) * phi(z), -zmax, zmax, tol)
}

/// Gauss-Hermite rule for the standard normal measure.
///
/// Nodes from the Jacobi matrix, polished by Newton steps; weights from the
/// Christoffel function so that tiny tail weights keep full relative accuracy.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(n, n, |i, k| {
        if i + 1 == k || k + 1 == i {
            (i.max(k) as f64).sqrt()
        } else {
            0.0
        }
    });
    // orthonormal Hermite values h_0..h_n at x
    let hermite = |x: f64| {
        let mut h = vec![1.0, x];
        for k in 1..n {
            let next = (x * h[k] - (k as f64).sqrt() * h[k - 1]) / ((k + 1) as f64).sqrt();
            h.push(next);
        }
        h
    };
    let mut nodes: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let h = hermite(*x);
            // h_n' = sqrt(n) h_{n-1}
            *x -= h[n] / ((n as f64).sqrt() * h[n - 1]);
        }
    }
    let weights = nodes
        .iter()
        .map(|&x| 1.0 / hermite(x)[..n].iter().map(|v| v * v).sum::<f64>())
        .collect();
    (nodes, weights)
}

/// Rounds `x` to `digits` decimals and returns it in units of the last digit.
pub fn last_digit_units(x: f64, digits: i32) -> i64 {
    (x * 10f64.powi(digits)).round() as i64
}
