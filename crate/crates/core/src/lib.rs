//! Multiperiod probability-of-default estimation from cohort (vintage) default
//! triangles.
//!
//! Two aggregation estimators are provided over ragged cumulative-default
//! triangles:
//!
//! - **Mean of Ratios**: the unweighted mean of per-cohort default rates.
//! - **Ratio of Means**: pooled defaults over pooled issued counts, i.e. the
//!   exposure-weighted mean of per-cohort rates.
//!
//! The [`simulation`] module compares their relative RMSE with a seeded,
//! schedule-independent Monte Carlo engine. [`dataio`] reads and writes the
//! delimited file formats and [`cli`] wires everything into reproducible runs.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod estimators;
pub mod simulation;

pub use error::{Error, Result};
pub use estimators::{
    aggregate_by_rating, curve_difference, default_rate, mean_of_ratios, pd_curve,
    portfolio_rollup, ratio_of_means, CohortRecord, CohortTriangle, CurvePoint, Estimator, PdCurve,
    PortfolioPanel, Rate, Rollup,
};
