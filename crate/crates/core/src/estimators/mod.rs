//! Default rates and the two cohort aggregation estimators.
//!
//! A cohort contributes to horizon `t` only if it observes `t`. Both the
//! numerator and the denominator of the Ratio of Means therefore shrink at
//! deep horizons, and the Mean of Ratios averages over observers only.
//!
//! Ratio of Means sums integer counts and divides once. Mean of Ratios
//! accumulates per-cohort fractions in `f64`.

mod aggregate;
mod types;

pub use aggregate::{aggregate_by_rating, curve_difference, portfolio_rollup};
pub use types::{
    CohortRecord, CohortTriangle, CurvePoint, Estimator, PdCurve, PortfolioPanel, Rate, Rollup,
};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Observed default rate `defaults / issued` for one cohort at one horizon.
pub fn default_rate(defaults: u64, issued: u64) -> Result<Rate> {
    if issued == 0 {
        return Err(Error::EmptyCohort);
    }
    if defaults > issued {
        return Err(Error::validation(format!(
            "defaults {defaults} exceed issued {issued}"
        )));
    }
    Ok(Rate::from_quotient(defaults as f64 / issued as f64))
}

/// Unweighted mean of per-cohort default rates over the cohorts observing `t`.
pub fn mean_of_ratios(triangle: &CohortTriangle, t: usize) -> Result<Rate> {
    mean_of_ratios_counted(triangle, t).map(|(r, _)| r)
}

/// Pooled defaults over pooled issued counts, both summed over the cohorts
/// observing `t`.
pub fn ratio_of_means(triangle: &CohortTriangle, t: usize) -> Result<Rate> {
    ratio_of_means_counted(triangle, t).map(|(r, _)| r)
}

fn mean_of_ratios_counted(triangle: &CohortTriangle, t: usize) -> Result<(Rate, usize)> {
    mean_of_ratios_cells(triangle.observers(t)).map_err(|e| unobserved_at(e, t))
}

fn ratio_of_means_counted(triangle: &CohortTriangle, t: usize) -> Result<(Rate, usize)> {
    ratio_of_means_cells(triangle.observers(t)).map_err(|e| unobserved_at(e, t))
}

fn unobserved_at(e: Error, t: usize) -> Error {
    match e {
        Error::HorizonUnobserved(_) => Error::HorizonUnobserved(t),
        other => other,
    }
}

/// Mean of Ratios over `(issued, defaults)` cells of one horizon.
///
/// Returns the estimate and the number of cells used. No cells yields
/// [`Error::HorizonUnobserved`].
pub fn mean_of_ratios_cells(cells: impl IntoIterator<Item = (u64, u64)>) -> Result<(Rate, usize)> {
    let mut sum = 0.0_f64;
    let mut n = 0_usize;
    for (issued, defaults) in cells {
        sum += default_rate(defaults, issued)?.value();
        n += 1;
    }
    if n == 0 {
        return Err(Error::HorizonUnobserved(0));
    }
    Ok((Rate::from_quotient(sum / n as f64), n))
}

/// Ratio of Means over `(issued, defaults)` cells of one horizon.
pub fn ratio_of_means_cells(cells: impl IntoIterator<Item = (u64, u64)>) -> Result<(Rate, usize)> {
    let mut defaults = 0_u128;
    let mut issued = 0_u128;
    let mut n = 0_usize;
    for (i, d) in cells {
        if d > i {
            return Err(Error::validation(format!("defaults {d} exceed issued {i}")));
        }
        issued += u128::from(i);
        defaults += u128::from(d);
        n += 1;
    }
    if n == 0 {
        return Err(Error::HorizonUnobserved(0));
    }
    if issued == 0 {
        return Err(Error::EmptyCohort);
    }
    Ok((Rate::from_quotient(defaults as f64 / issued as f64), n))
}

/// Applies `estimator` at one horizon.
pub fn estimate(triangle: &CohortTriangle, t: usize, estimator: Estimator) -> Result<Rate> {
    estimate_counted(triangle, t, estimator).map(|(r, _)| r)
}

fn estimate_counted(
    triangle: &CohortTriangle,
    t: usize,
    estimator: Estimator,
) -> Result<(Rate, usize)> {
    match estimator {
        Estimator::MeanOfRatios => mean_of_ratios_counted(triangle, t),
        Estimator::RatioOfMeans => ratio_of_means_counted(triangle, t),
    }
}

/// Term structure over every observable horizon of the triangle.
///
/// Horizons no cohort observes are omitted. A triangle whose cohorts observe
/// nothing at all yields [`Error::HorizonUnobserved`] for horizon 1.
pub fn pd_curve(triangle: &CohortTriangle, estimator: Estimator) -> Result<PdCurve> {
    if triangle.is_empty() {
        return Err(Error::validation("triangle has no cohorts"));
    }
    let deepest = triangle.deepest_observed();
    if deepest == 0 {
        return Err(Error::HorizonUnobserved(1));
    }
    let mut points = BTreeMap::new();
    // Contiguous observability means every horizon up to the deepest has an observer.
    for t in 1..=deepest {
        let (rate, cohorts_used) = estimate_counted(triangle, t, estimator)?;
        points.insert(t, CurvePoint { rate, cohorts_used });
    }
    Ok(PdCurve { estimator, points })
}
