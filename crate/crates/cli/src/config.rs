//! The fully resolved description of a run. It is echoed into every output
//! and can be fed back through `--config` to repeat the run.

use asian_lns::{BasisMethod, MarketParams, McConfig};
use serde::{Deserialize, Serialize};

use crate::report::Format;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub run: Run,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Run {
    Price(PriceRun),
    Bench(BenchRun),
    Density(DensityRun),
    Errbound(ErrboundRun),
}

/// Weight of the normalized average and the basis construction.
///
/// Unset parameters follow the default rule for each market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub mu: Option<f64>,
    pub nu2: Option<f64>,
    pub method: BasisMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRun {
    pub market: MarketParams,
    pub orders: Vec<usize>,
    pub series: SeriesSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub orders: Vec<usize>,
    pub series: SeriesSpec,
    pub with_mc: bool,
    pub timings: bool,
    pub mc: McConfig,
    /// `"builtin"` for the bundled reference values, otherwise a CSV path.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRun {
    pub market: MarketParams,
    pub order: usize,
    pub series: SeriesSpec,
    /// Grid ends in units of `S0`; unset covers the central 99.9% of the weight.
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub points: usize,
    pub with_mc: bool,
    pub mc: McConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrboundRun {
    pub market: MarketParams,
    pub orders: Vec<usize>,
    /// Volatilities replacing `market.sigma`, one block of rows each.
    pub sigma_grid: Option<Vec<f64>>,
    pub series: SeriesSpec,
    pub mc: McConfig,
}
