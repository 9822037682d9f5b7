//! Pool estimates of epidemic outcome measures (R(t), growth rate r, daily
//! infections I) reported as percentiles by several candidate models.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`prep`] converts each model's five percentiles into a mean and a
//!    standard error, fitting a gamma distribution when the percentiles are
//!    noticeably skewed;
//! 2. [`meta`] estimates the between-model variance by REML and pools the
//!    model means with equal (or inverse-variance) weights, producing Wald or
//!    Knapp-Hartung confidence intervals and prediction intervals;
//! 3. [`report`] writes JSON, CSV and SVG forest plots.
//!
//! [`reliability`] scores how representative a region's pooled R(t) is, and
//! [`pipeline`] ties everything together for the `metapool` binary.
//!
//! ```
//! use metapool::prelude::*;
//!
//! let rows = [
//!     ("model1", [0.63, 0.68, 0.74, 0.81, 0.87]),
//!     ("model3", [0.64, 0.70, 0.74, 0.79, 0.87]),
//!     ("model12", [0.66, 0.71, 0.76, 0.80, 0.86]),
//! ];
//! let cfg = PrepConfig::default();
//! let summaries: Vec<FittedSummary> = rows
//!     .iter()
//!     .map(|(m, q)| {
//!         let q = QuantileSet::new(*m, "region10", OutcomeMeasure::ReproductionNumber, *q)?;
//!         fit_summary(&q, &cfg)
//!     })
//!     .collect::<Result<_>>()?;
//!
//! let pooled = combine_region(&summaries, &PoolConfig::default())?;
//! assert!((pooled.theta_hat - (0.74 + 0.74 + 0.76) / 3.0).abs() < 1e-12);
//! assert!(pooled.ci_low < pooled.theta_hat && pooled.theta_hat < pooled.ci_high);
//! # Ok::<(), metapool::Error>(())
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod meta;
pub mod optim;
pub mod pipeline;
pub mod prep;
pub mod reliability;
pub mod report;
pub mod types;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::meta::{
        combine_region, pool, reml_tau2, IntervalMethod, PoolConfig, PoolResult, Weighting,
    };
    pub use crate::prep::{bowley_skewness, conservative_se, fit_summary, PrepConfig};
    pub use crate::types::{
        group_for_pooling, validate_quantiles, Dataset, FitPath, FittedSummary, OutcomeMeasure,
        QuantileSet,
    };
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/percentiles.md")]
    mod percentiles {}
    #[doc = include_str!("../../../book/src/gamma-fit.md")]
    mod gamma_fit {}
    #[doc = include_str!("../../../book/src/pooling.md")]
    mod pooling {}
    #[doc = include_str!("../../../book/src/reliability.md")]
    mod reliability {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
