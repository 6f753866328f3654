//! Execution of each subcommand.

use std::time::Instant;

use asian_lns::mc::{
    density_cv, error_bound, likelihood_norm_sq_from_samples, price_cv, price_cv_from_samples,
    simulate, simulate_independent, sre,
};
use asian_lns::special::norm_quantile;
use asian_lns::{
    default_weight, price_with, MarketParams, PricingOptions, SeriesApproximation, Stage,
    WeightParams,
};
use serde::Deserialize;
use serde_json::Value;

use crate::config::{BenchRun, DensityRun, ErrboundRun, PriceRun, Run, RunConfig, SeriesSpec};
use crate::error::CliError;
use crate::report::{col, Cell, Report, Style};

/// Benchmark parameterizations `(r, sigma, T, S0)`, all struck at 2.
pub const BENCH_CASES: [(f64, f64, f64, f64); 7] = [
    (0.02, 0.10, 1.0, 2.0),
    (0.18, 0.30, 1.0, 2.0),
    (0.0125, 0.25, 2.0, 2.0),
    (0.05, 0.50, 1.0, 1.9),
    (0.05, 0.50, 1.0, 2.0),
    (0.05, 0.50, 1.0, 2.1),
    (0.05, 0.50, 2.0, 2.0),
];
pub const BENCH_STRIKE: f64 = 2.0;
const BUILTIN_REFERENCE: &str = include_str!("../data/bench_reference.csv");

/// A finished run. `failure` carries the first error of a batch that kept going.
pub struct Outcome {
    pub report: Report,
    pub failure: Option<CliError>,
}

pub fn execute(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    match &mut cfg.run {
        Run::Price(p) => {
            resolve(&mut p.series, &p.market)?;
            let snapshot = serde_json::to_value(&*cfg)?;
            let Run::Price(p) = &cfg.run else {
                unreachable!()
            };
            price(p, snapshot)
        }
        Run::Density(d) => {
            resolve(&mut d.series, &d.market)?;
            let w = weight_for(&d.series, &d.market)?;
            let q = |p: f64| (w.mu + w.nu * norm_quantile(p)).exp();
            d.x_min.get_or_insert_with(|| q(0.0005));
            d.x_max.get_or_insert_with(|| q(0.9995));
            let snapshot = serde_json::to_value(&*cfg)?;
            let Run::Density(d) = &cfg.run else {
                unreachable!()
            };
            density(d, snapshot)
        }
        Run::Bench(b) => {
            let b = b.clone();
            bench(&b, serde_json::to_value(&*cfg)?)
        }
        Run::Errbound(e) => {
            let e = e.clone();
            errbound(&e, serde_json::to_value(&*cfg)?)
        }
    }
}

/// Fills in the default weight of the normalized market.
fn resolve(spec: &mut SeriesSpec, market: &MarketParams) -> Result<(), CliError> {
    let w = weight_for(spec, market)?;
    spec.mu = Some(w.mu);
    spec.nu2 = Some(w.nu_sq());
    Ok(())
}

fn weight_for(spec: &SeriesSpec, market: &MarketParams) -> Result<WeightParams, CliError> {
    market.validate()?;
    let norm = market.normalized();
    let default = default_weight(&norm, norm.first_moment())?;
    let w = match (spec.mu, spec.nu2) {
        (None, None) => default,
        (Some(mu), None) => WeightParams::from_nu_sq(mu, default.nu_sq())?,
        // keep the first moment matched
        (None, Some(nu2)) => WeightParams::from_nu_sq(norm.first_moment().ln() - 0.5 * nu2, nu2)?,
        (Some(mu), Some(nu2)) => WeightParams::from_nu_sq(mu, nu2)?,
    };
    Ok(w)
}

fn approx(
    market: &MarketParams,
    order: usize,
    spec: &SeriesSpec,
) -> Result<SeriesApproximation, CliError> {
    let opts = PricingOptions {
        method: spec.method,
        weight: Some(weight_for(spec, market)?),
        ..PricingOptions::default()
    };
    Ok(price_with(market, order, &opts)?)
}

fn check_orders(orders: &[usize]) -> Result<(), CliError> {
    if orders.is_empty() {
        return Err(CliError::Usage(
            "at least one truncation order is required".into(),
        ));
    }
    Ok(())
}

fn push_unique(diag: &mut Vec<String>, label: &str, items: Vec<String>) {
    for d in items.into_iter().map(|d| format!("{label}: {d}")) {
        if !diag.contains(&d) {
            diag.push(d);
        }
    }
}

fn price(p: &PriceRun, config: Value) -> Result<Outcome, CliError> {
    check_orders(&p.orders)?;
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for &n in &p.orders {
        let a = approx(&p.market, n, &p.series)?;
        push_unique(&mut diagnostics, &format!("N={n}"), a.diagnostics());
        rows.push(vec![
            Cell::from(n),
            Cell::from(a.effective_order),
            Cell::from(a.price),
            Cell::from(a.eps_f),
            Cell::from(a.convergence()),
        ]);
    }
    Ok(Outcome {
        report: Report {
            schema: "price/1",
            config,
            columns: vec![
                col("N", Style::Plain),
                col("N_eff", Style::Plain),
                col("price", Style::Fixed(5)),
                col("eps_F", Style::Sci),
                col("convergence", Style::Sci),
            ],
            rows,
            diagnostics,
        },
        failure: None,
    })
}

#[derive(Debug, Deserialize)]
struct ReferenceRow {
    case: usize,
    #[serde(rename = "EE")]
    ee: String,
    #[serde(rename = "LNS10")]
    lns10: String,
    #[serde(rename = "LNS15")]
    lns15: String,
    #[serde(rename = "LNS20")]
    lns20: String,
}

impl ReferenceRow {
    fn lns(&self, n: usize) -> Option<&str> {
        match n {
            10 => Some(&self.lns10),
            15 => Some(&self.lns15),
            20 => Some(&self.lns20),
            _ => None,
        }
    }
}

fn load_reference(source: &str) -> Result<Vec<ReferenceRow>, CliError> {
    let text = if source == "builtin" {
        BUILTIN_REFERENCE.to_string()
    } else {
        std::fs::read_to_string(source).map_err(|e| CliError::Io {
            path: source.into(),
            source: e,
        })?
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// Distance in units of the last printed digit of `printed`.
fn digit_units(value: f64, printed: &str) -> Option<i64> {
    let digits = printed.split('.').nth(1)?.len() as i32;
    let reference: f64 = printed.parse().ok()?;
    let scale = 10f64.powi(digits);
    Some(((value * scale).round() - (reference * scale).round()).abs() as i64)
}

fn bench(b: &BenchRun, config: Value) -> Result<Outcome, CliError> {
    check_orders(&b.orders)?;
    b.mc.validate(&MarketParams::new(0.05, 0.5, 1.0, 2.0, 2.0)?)?;
    let reference = b.reference.as_deref().map(load_reference).transpose()?;
    let mut columns = vec![
        col("case", Style::Plain),
        col("r", Style::Plain),
        col("sigma", Style::Plain),
        col("T", Style::Plain),
        col("S0", Style::Plain),
        col("K", Style::Plain),
    ];
    columns.extend(
        b.orders
            .iter()
            .map(|n| col(format!("LNS{n}"), Style::Fixed(5))),
    );
    if b.with_mc {
        columns.push(col("MC_lo", Style::Fixed(5)));
        columns.push(col("MC_hi", Style::Fixed(5)));
    }
    if b.timings {
        columns.push(col("ms", Style::Fixed(3)));
    }
    if reference.is_some() {
        columns.extend(
            b.orders
                .iter()
                .map(|n| col(format!("ref_LNS{n}"), Style::Plain)),
        );
        columns.push(col("ref_EE", Style::Plain));
    }

    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut failure = None;
    for (i, &(r, sigma, t, s0)) in BENCH_CASES.iter().enumerate() {
        let case = i + 1;
        let m = MarketParams::new(r, sigma, t, s0, BENCH_STRIKE)?;
        let mut row: Vec<Cell> = vec![
            case.into(),
            r.into(),
            sigma.into(),
            t.into(),
            s0.into(),
            BENCH_STRIKE.into(),
        ];
        let mut prices = Vec::new();
        let mut last_ms = None;
        for &n in &b.orders {
            let start = Instant::now();
            match approx(&m, n, &b.series) {
                Ok(a) => {
                    last_ms = Some(start.elapsed().as_secs_f64() * 1e3);
                    prices.push(Some(a.price));
                    row.push(a.price.into());
                }
                Err(e) => {
                    diagnostics.push(format!("case {case} N={n}: {e}"));
                    failure.get_or_insert(e);
                    prices.push(None);
                    row.push(Cell::Empty);
                }
            }
        }
        if b.with_mc {
            match price_cv(&m, &b.mc) {
                Ok(est) => row.extend([est.ci95.0.into(), est.ci95.1.into()]),
                Err(e) => {
                    diagnostics.push(format!("case {case} MC: {e}"));
                    failure.get_or_insert(e.into());
                    row.extend([Cell::Empty, Cell::Empty]);
                }
            }
        }
        if b.timings {
            row.push(last_ms.into());
        }
        if let Some(refs) = &reference {
            let rr = refs.iter().find(|x| x.case == case);
            for (k, &n) in b.orders.iter().enumerate() {
                let printed = rr.and_then(|x| x.lns(n));
                row.push(printed.map_or(Cell::Empty, |s| Cell::Text(s.into())));
                if let (Some(s), Some(p)) = (printed, prices[k]) {
                    match digit_units(p, s) {
                        Some(u) if u > 2 => diagnostics.push(format!(
                            "case {case} LNS{n}: {p:.7} is {u} last-digit units from the reference {s}"
                        )),
                        _ => {}
                    }
                }
            }
            row.push(rr.map_or(Cell::Empty, |x| Cell::Text(x.ee.clone())));
        }
        rows.push(row);
    }
    Ok(Outcome {
        report: Report {
            schema: "bench/1",
            config,
            columns,
            rows,
            diagnostics,
        },
        failure,
    })
}

fn density(d: &DensityRun, config: Value) -> Result<Outcome, CliError> {
    let a = approx(&d.market, d.order, &d.series)?;
    let g = a.density();
    let (lo, hi) = (d.x_min.unwrap_or(f64::NAN), d.x_max.unwrap_or(f64::NAN));
    if !(lo > 0.0 && hi > lo) {
        return Err(CliError::Usage(format!(
            "density grid needs 0 < x-min < x-max, got [{lo}, {hi}]"
        )));
    }
    if d.points < 2 {
        return Err(CliError::Usage(
            "density grid needs at least 2 points".into(),
        ));
    }
    let xs: Vec<f64> = (0..d.points)
        .map(|i| {
            if i + 1 == d.points {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (d.points - 1) as f64
            }
        })
        .collect();
    let g0 = g.truncated(0);
    let g4 = g.truncated(4);
    let mc = if d.with_mc {
        Some(density_cv(&d.market, &d.mc, &xs)?)
    } else {
        None
    };
    let mut columns = vec![
        col("x", Style::Fixed(5)),
        col("g0", Style::Fixed(6)),
        col("g4", Style::Fixed(6)),
        col("gN", Style::Fixed(6)),
    ];
    if mc.is_some() {
        columns.push(col("mc", Style::Fixed(6)));
        columns.push(col("mc_se", Style::Sci));
    }
    let mut rows = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let mut row = vec![
            x.into(),
            g0.eval(x)?.into(),
            g4.eval(x)?.into(),
            g.eval(x)?.into(),
        ];
        if let Some(mc) = &mc {
            row.push(mc.cv[i].value.into());
            row.push(mc.cv[i].std_error.into());
        }
        rows.push(row);
    }
    Ok(Outcome {
        report: Report {
            schema: "density/1",
            config,
            columns,
            rows,
            diagnostics: a.diagnostics(),
        },
        failure: None,
    })
}

fn errbound(e: &ErrboundRun, config: Value) -> Result<Outcome, CliError> {
    check_orders(&e.orders)?;
    let sigmas = e.sigma_grid.clone().unwrap_or_else(|| vec![e.market.sigma]);
    let columns = vec![
        col("sigma", Style::Plain),
        col("N", Style::Plain),
        col("mu", Style::Sci),
        col("nu2", Style::Sci),
        col("price", Style::Fixed(5)),
        col("eps_F", Style::Sci),
        col("norm_sq", Style::Fixed(5)),
        col("norm_sq_se", Style::Sci),
        col("eps_ell", Style::Sci),
        col("eps_ell_se", Style::Sci),
        col("bound", Style::Sci),
        col("bound_lo", Style::Sci),
        col("bound_hi", Style::Sci),
        col("mc_price", Style::Fixed(5)),
        col("mc_se", Style::Sci),
        col("sqrt_sre", Style::Sci),
        col("sqrt_sre_lo", Style::Sci),
        col("sqrt_sre_hi", Style::Sci),
    ];
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for sigma in sigmas {
        let m = MarketParams { sigma, ..e.market };
        m.validate()?;
        e.mc.validate(&m)?;
        let w = weight_for(&e.series, &m)?;
        let main = simulate(&m, &e.mc)?;
        let mc = price_cv_from_samples(&m, &main, &e.mc);
        let norm = match w.check_square_integrable(&m, Stage::MonteCarlo) {
            Ok(()) => Some(likelihood_norm_sq_from_samples(
                &m,
                &w,
                &main,
                &simulate_independent(&m, &e.mc)?,
                &e.mc,
            )?),
            Err(err) => {
                diagnostics.push(format!(
                    "sigma={sigma}: {err}; likelihood norm not estimated"
                ));
                None
            }
        };
        for &n in &e.orders {
            let a = approx(&m, n, &e.series)?;
            push_unique(
                &mut diagnostics,
                &format!("sigma={sigma} N={n}"),
                a.diagnostics(),
            );
            let mut row: Vec<Cell> = vec![
                sigma.into(),
                n.into(),
                w.mu.into(),
                w.nu_sq().into(),
                a.price.into(),
                a.eps_f.into(),
            ];
            match &norm {
                Some(norm) => {
                    let b = error_bound(&a, norm);
                    row.extend([
                        norm.value.into(),
                        norm.std_error.into(),
                        b.eps_ell.into(),
                        b.eps_ell_se.into(),
                        b.bound.into(),
                        b.ci95.0.into(),
                        b.ci95.1.into(),
                    ]);
                }
                None => row.extend(std::iter::repeat_n(Cell::Empty, 7)),
            }
            let s = sre(&mc, a.price);
            row.extend([
                mc.value.into(),
                mc.std_error.into(),
                s.sqrt.into(),
                s.sqrt_ci95.0.into(),
                s.sqrt_ci95.1.into(),
            ]);
            rows.push(row);
        }
    }
    Ok(Outcome {
        report: Report {
            schema: "errbound/1",
            config,
            columns,
            rows,
            diagnostics,
        },
        failure: None,
    })
}
