//! `asian-lns`: price arithmetic Asian calls from the command line.

mod config;
mod error;
mod report;
mod run;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use asian_lns::{BasisMethod, MarketParams, McConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{BenchRun, DensityRun, ErrboundRun, PriceRun, Run, RunConfig, SeriesSpec};
use error::CliError;
use report::Format;

#[derive(Parser)]
#[command(
    name = "asian-lns",
    version,
    about,
    allow_negative_numbers = true,
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Repeat a run from the `config` object echoed by an earlier one.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write results here instead of stdout.
    #[arg(long, short, global = true, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Series prices for one market at several truncation orders.
    #[command(allow_negative_numbers = true)]
    Price {
        #[command(flatten)]
        market: MarketArgs,
        /// Truncation orders.
        #[arg(long = "N", value_delimiter = ',', default_value = "10,15,20")]
        orders: Vec<usize>,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// The seven benchmark cases.
    #[command(allow_negative_numbers = true)]
    Bench {
        #[arg(long = "N", value_delimiter = ',', default_value = "10,15,20")]
        orders: Vec<usize>,
        #[command(flatten)]
        series: SeriesArgs,
        /// Add control-variate Monte Carlo confidence intervals.
        #[arg(long)]
        with_mc: bool,
        /// Add the wall time of the highest-order series per case.
        #[arg(long)]
        timings: bool,
        /// Compare with published values: the bundled set, or a CSV file.
        #[arg(long, value_name = "FILE", num_args = 0..=1, default_missing_value = "builtin")]
        reference: Option<String>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Density of the normalized average `A_T / S0` on a grid.
    #[command(allow_negative_numbers = true)]
    Density {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long = "N", default_value_t = 20)]
        order: usize,
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long)]
        x_min: Option<f64>,
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Add the Malliavin control-variate estimate and its standard error.
        #[arg(long)]
        with_mc: bool,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Error bound `sqrt(eps_F eps_ell)` next to Monte Carlo.
    #[command(allow_negative_numbers = true)]
    Errbound {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long = "N", value_delimiter = ',', default_value = "20")]
        orders: Vec<usize>,
        /// Repeat for each volatility, keeping the other market inputs.
        #[arg(long, value_delimiter = ',')]
        sigma_grid: Option<Vec<f64>>,
        #[command(flatten)]
        series: SeriesArgs,
        #[command(flatten)]
        mc: McArgs,
    },
}

#[derive(Args)]
struct MarketArgs {
    #[arg(long, default_value_t = 0.05)]
    r: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    maturity: f64,
    #[arg(long = "S0", default_value_t = 2.0)]
    spot: f64,
    #[arg(long = "K", default_value_t = 2.0)]
    strike: f64,
}

#[derive(Args)]
struct SeriesArgs {
    /// Log-mean of the weight (normalized units).
    #[arg(long)]
    mu: Option<f64>,
    /// Log-variance of the weight.
    #[arg(long)]
    nu2: Option<f64>,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    method: Method,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Cholesky,
    Recurrence,
    Auto,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 200_000)]
    paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, env = "ASIAN_LNS_THREADS", default_value_t = 0)]
    threads: usize,
}

impl MarketArgs {
    // Validation happens when the run starts so that replayed configs get it too.
    fn params(&self) -> MarketParams {
        MarketParams {
            r: self.r,
            sigma: self.sigma,
            maturity: self.maturity,
            spot: self.spot,
            strike: self.strike,
        }
    }
}

impl SeriesArgs {
    fn spec(&self) -> SeriesSpec {
        SeriesSpec {
            mu: self.mu,
            nu2: self.nu2,
            method: match self.method {
                Method::Cholesky => BasisMethod::CholeskyScaled,
                Method::Recurrence => BasisMethod::Recurrence,
                Method::Auto => BasisMethod::Auto,
            },
        }
    }
}

impl McArgs {
    fn config(&self) -> McConfig {
        McConfig {
            paths: self.paths,
            dt: self.dt,
            seed: self.seed,
            batches: self.threads,
        }
    }
}

impl Command {
    fn into_run(self) -> Run {
        match self {
            Command::Price {
                market,
                orders,
                series,
            } => Run::Price(PriceRun {
                market: market.params(),
                orders,
                series: series.spec(),
            }),
            Command::Bench {
                orders,
                series,
                with_mc,
                timings,
                reference,
                mc,
            } => Run::Bench(BenchRun {
                orders,
                series: series.spec(),
                with_mc,
                timings,
                mc: mc.config(),
                reference,
            }),
            Command::Density {
                market,
                order,
                series,
                x_min,
                x_max,
                points,
                with_mc,
                mc,
            } => Run::Density(DensityRun {
                market: market.params(),
                order,
                series: series.spec(),
                x_min,
                x_max,
                points,
                with_mc,
                mc: mc.config(),
            }),
            Command::Errbound {
                market,
                orders,
                sigma_grid,
                series,
                mc,
            } => Run::Errbound(ErrboundRun {
                market: market.params(),
                orders,
                sigma_grid,
                series: series.spec(),
                mc: mc.config(),
            }),
        }
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e,
    })?;
    // Accept either a bare config or a whole JSON report.
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let value = match value.get("config") {
        Some(inner) if value.get("results").is_some() => inner.clone(),
        _ => value,
    };
    Ok(serde_json::from_value(value)?)
}

fn run(cli: Cli) -> Result<Option<CliError>, CliError> {
    let mut cfg = match (cli.command, &cli.config) {
        (Some(cmd), _) => RunConfig {
            run: cmd.into_run(),
            format: cli.format.unwrap_or_default(),
        },
        (None, Some(path)) => {
            let mut cfg = load_config(path)?;
            if let Some(f) = cli.format {
                cfg.format = f;
            }
            cfg
        }
        (None, None) => {
            return Err(CliError::Usage(
                "a subcommand or --config is required".into(),
            ))
        }
    };
    let outcome = run::execute(&mut cfg)?;
    for d in &outcome.report.diagnostics {
        eprintln!("warning: {d}");
    }
    let mut out: Box<dyn Write> = match &cli.output {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
            CliError::Io {
                path: path.clone(),
                source: e,
            }
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    outcome.report.write(cfg.format, &mut out)?;
    out.flush()?;
    Ok(outcome.failure)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(e)) | Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
