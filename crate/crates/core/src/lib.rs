//! Arithmetic Asian option prices in the Black-Scholes model from a series of
//! polynomials orthonormal under a log-normal weight.
//!
//! ```
//! use asian_lns::{price, MarketParams};
//!
//! let market = MarketParams::new(0.05, 0.5, 1.0, 2.0, 2.0)?;
//! let approx = price(&market, 20, None)?;
//! assert!((approx.price - 0.2461).abs() < 2e-4);
//! # Ok::<(), asian_lns::Error>(())
//! ```

// `!(x > 0.0)` is how NaN gets rejected together with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod mc;
pub mod model;
pub mod pricer;
pub mod special;

pub use basis::{
    default_weight, gram, orthonormal_basis, weight_density, BasisMethod, GramForm, GramMatrix,
    OrthonormalBasis, WeightParams,
};
pub use error::{Error, Result, Stage};
pub use mc::{McConfig, McEstimate};
pub use model::{
    generator, moments, GeneratorMatrix, MarketParams, MatrixForm, MomentKind, MomentVector,
};
pub use pricer::{
    price, price_with, DensityApproximant, PayoffKind, PricingOptions, SeriesApproximation,
};

// The guide's code listings run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/basis.md")]
    mod basis {}
    #[doc = include_str!("../../../book/src/pricing.md")]
    mod pricing {}
    #[doc = include_str!("../../../book/src/error-analysis.md")]
    mod error_analysis {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
