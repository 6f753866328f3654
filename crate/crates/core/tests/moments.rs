#![allow(clippy::needless_range_loop)]

mod common;

use approx::assert_relative_eq;
use asian_lns::{default_weight, moments, Error, MarketParams, MomentKind, WeightParams};
use common::rk4_moments;
use proptest::prelude::*;

fn unit(r: f64, sigma: f64, t: f64) -> MarketParams {
    MarketParams::new(r, sigma, t, 1.0, 1.0).unwrap()
}

#[test]
fn degree_one_against_rk4() {
    let m = moments(&unit(0.05, 0.5, 1.0), 1, None, MomentKind::Raw).unwrap();
    let ode = rk4_moments(0.05, 0.5, 1.0, 1, 1e-5);
    assert_relative_eq!(m.values[1], ode[1], max_relative = 1e-12);
    assert_relative_eq!(m.values[1], 1.025_421_9, max_relative = 1e-7);
}

#[test]
fn degree_four_against_rk4() {
    let m = moments(&unit(0.05, 0.5, 1.0), 4, None, MomentKind::Raw).unwrap();
    let ode = rk4_moments(0.05, 0.5, 1.0, 4, 1e-5);
    for n in 0..=4 {
        assert_relative_eq!(m.values[n], ode[n], max_relative = 1e-10);
    }
}

#[test]
fn exponential_matches_ode_up_to_degree_twenty() {
    for &(r, sigma, t) in &[
        (0.02, 0.10, 1.0),
        (0.18, 0.30, 1.0),
        (0.0125, 0.25, 2.0),
        (0.05, 0.50, 1.0),
        (0.05, 0.50, 2.0),
        (-0.09, 0.30, 1.0),
        (0.05, 0.8, 1.0),
    ] {
        let m = moments(&unit(r, sigma, t), 20, None, MomentKind::Raw).unwrap();
        let ode = rk4_moments(r, sigma, t, 20, 1e-5);
        for n in 0..=20 {
            assert_relative_eq!(m.values[n], ode[n], max_relative = 1e-9);
        }
    }
}

#[test]
fn repeated_eigenvalues() {
    // r = -sigma^2 makes lambda_1 = lambda_2
    let m = moments(&unit(-0.09, 0.3, 1.0), 3, None, MomentKind::Raw).unwrap();
    let ode = rk4_moments(-0.09, 0.3, 1.0, 3, 1e-5);
    for n in 0..=3 {
        assert_relative_eq!(m.values[n], ode[n], max_relative = 1e-11);
    }
}

#[test]
fn relative_moments_at_high_order() {
    let mk = unit(0.05, 0.5, 2.0);
    let w = default_weight(&mk, mk.first_moment()).unwrap();
    let h = moments(&mk, 40, Some(&w), MomentKind::Relative).unwrap();
    assert_eq!(h.values[0], 1.0);
    assert!((h.values[1] - 1.0).abs() < 1e-12);
    assert!(h.values.iter().all(|v| v.is_finite() && *v > 0.0));
    // the average has heavier tails than the weight: h_n eventually grows
    assert!(h.values[40] > h.values[20] && h.values[20] > 1.0);
    let raw = moments(&mk, 40, None, MomentKind::Raw).unwrap();
    for n in [10, 25, 40] {
        assert_relative_eq!(
            h.values[n] * w.moment(n),
            raw.values[n],
            max_relative = 1e-10
        );
    }
}

#[test]
fn raw_overflow_names_the_degree() {
    let err = moments(&unit(0.1, 2.0, 5.0), 30, None, MomentKind::Raw).unwrap_err();
    match err {
        Error::Overflow { degree, .. } => assert!(degree > 0 && degree <= 30),
        e => panic!("unexpected {e}"),
    }
    assert_eq!(err_stage(), "model");
}

fn err_stage() -> String {
    moments(&unit(0.1, 2.0, 5.0), 30, None, MomentKind::Raw)
        .unwrap_err()
        .stage()
        .to_string()
}

#[test]
fn first_moment_increases_with_rate() {
    let mut last = 0.0;
    for i in 0..=40 {
        let r = -0.2 + 0.01 * i as f64;
        let m1 = moments(&unit(r, 0.3, 1.5), 1, None, MomentKind::Raw)
            .unwrap()
            .values[1];
        assert!(m1 > last, "r={r}");
        last = m1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_times_weight_moment_is_raw(
        r in -0.1f64..0.2, sigma in 0.05f64..0.9, t in 0.25f64..3.0, n in 1usize..16,
        dmu in -0.3f64..0.3, extra in 0.0f64..0.3,
    ) {
        let mk = unit(r, sigma, t);
        let w = WeightParams::from_nu_sq(dmu, 0.5 * mk.tau() + 1e-4 + extra).unwrap();
        let raw = moments(&mk, n, None, MomentKind::Raw).unwrap();
        let rel = moments(&mk, n, Some(&w), MomentKind::Relative).unwrap();
        for k in 0..=n {
            let back = rel.values[k] * w.moment(k);
            prop_assert!((back / raw.values[k] - 1.0).abs() < 1e-12, "k={} {} {}", k, back, raw.values[k]);
        }
    }

    #[test]
    fn raw_moments_positive_and_log_convex(
        r in -0.1f64..0.2, sigma in 0.05f64..0.9, t in 0.25f64..3.0,
    ) {
        let m = moments(&unit(r, sigma, t), 15, None, MomentKind::Raw).unwrap().values;
        prop_assert_eq!(m[0], 1.0);
        for n in 1..15 {
            prop_assert!(m[n] > 0.0);
            prop_assert!(m[n] * m[n] <= m[n - 1] * m[n + 1] * (1.0 + 1e-12));
        }
    }
}
