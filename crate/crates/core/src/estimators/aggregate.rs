use std::collections::BTreeMap;

use super::pd_curve;
use super::types::{
    CohortRecord, CohortTriangle, CurvePoint, Estimator, PdCurve, PortfolioPanel, Rate, Rollup,
};
use crate::error::{Error, Result};

/// Rating ids in first-appearance order, after checking every panel carries
/// the same set.
fn common_ratings(panels: &[PortfolioPanel]) -> Result<Vec<String>> {
    let first = panels
        .first()
        .ok_or_else(|| Error::validation("no portfolio panels"))?;
    let reference: Vec<String> = first.rating_ids().map(str::to_owned).collect();
    for panel in &panels[1..] {
        let missing: Vec<&str> = reference
            .iter()
            .map(String::as_str)
            .filter(|r| panel.triangle(r).is_none())
            .collect();
        let extra: Vec<&str> = panel
            .rating_ids()
            .filter(|r| !reference.iter().any(|x| x == r))
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::validation(format!(
                "rating sets differ between panels {} and {}: missing [{}], extra [{}]",
                first.year(),
                panel.year(),
                missing.join(", "),
                extra.join(", ")
            )));
        }
    }
    Ok(reference)
}

fn max_horizon(panels: &[PortfolioPanel]) -> usize {
    panels
        .iter()
        .map(PortfolioPanel::max_horizon)
        .max()
        .unwrap_or(0)
}

/// Cohorts of one rating class from every panel, fused into a single triangle.
fn fuse_rating(panels: &[PortfolioPanel], rating: &str) -> Result<CohortTriangle> {
    let cohorts: Vec<CohortRecord> = panels
        .iter()
        .filter_map(|p| p.triangle(rating))
        .flat_map(|t| t.cohorts().iter().cloned())
        .collect();
    CohortTriangle::from_unsorted(cohorts, max_horizon(panels))
        .map_err(|e| Error::validation(format!("rating '{rating}': {e}")))
}

/// Every rating class of every panel summed into one cohort per issue year.
///
/// A pooled cohort observes only the horizons observed by all of its parts.
fn pool_ratings(panels: &[PortfolioPanel]) -> Result<CohortTriangle> {
    let mut by_year: BTreeMap<i32, (u64, Vec<u64>)> = BTreeMap::new();
    for panel in panels {
        for (_, tri) in panel.rating_classes() {
            for c in tri.cohorts() {
                match by_year.get_mut(&c.issue_year()) {
                    None => {
                        by_year.insert(
                            c.issue_year(),
                            (c.issued(), c.cumulative_defaults().to_vec()),
                        );
                    }
                    Some((issued, defaults)) => {
                        *issued += c.issued();
                        defaults.truncate(c.observed_horizons());
                        for (acc, d) in defaults.iter_mut().zip(c.cumulative_defaults()) {
                            *acc += d;
                        }
                    }
                }
            }
        }
    }
    let cohorts = by_year
        .into_iter()
        .map(|(year, (issued, defaults))| CohortRecord::new(year, issued, defaults))
        .collect::<Result<Vec<_>>>()?;
    CohortTriangle::new(cohorts, max_horizon(panels))
}

/// One curve per rating class, in first-appearance order.
///
/// Each rating's cohorts are gathered across all panels, so horizon `t` uses
/// only the issue years observed for at least `t` years.
pub fn aggregate_by_rating(
    panels: &[PortfolioPanel],
    estimator: Estimator,
) -> Result<Vec<(String, PdCurve)>> {
    common_ratings(panels)?
        .into_iter()
        .map(|rating| {
            let tri = fuse_rating(panels, &rating)?;
            let curve = pd_curve(&tri, estimator)?;
            Ok((rating, curve))
        })
        .collect()
}

/// Portfolio-level curve across all rating classes.
pub fn portfolio_rollup(
    panels: &[PortfolioPanel],
    estimator: Estimator,
    rollup: Rollup,
) -> Result<PdCurve> {
    match rollup {
        Rollup::PooledTotals => {
            common_ratings(panels)?;
            pd_curve(&pool_ratings(panels)?, estimator)
        }
        Rollup::MeanOverRatings => {
            let curves = aggregate_by_rating(panels, estimator)?;
            let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for (_, curve) in &curves {
                for (t, rate) in curve.rates() {
                    let e = sums.entry(t).or_insert((0.0, 0));
                    e.0 += rate.value();
                    e.1 += 1;
                }
            }
            let points = sums
                .into_iter()
                .map(|(t, (sum, n))| {
                    let point = CurvePoint {
                        rate: Rate::from_quotient(sum / n as f64),
                        cohorts_used: n,
                    };
                    (t, point)
                })
                .collect();
            Ok(PdCurve { estimator, points })
        }
    }
}

/// `a - b` in basis points on every horizon both curves share.
pub fn curve_difference(a: &PdCurve, b: &PdCurve) -> Result<BTreeMap<usize, f64>> {
    let diff: BTreeMap<usize, f64> = a
        .rates()
        .filter_map(|(t, ra)| b.rate(t).map(|rb| (t, (ra.value() - rb.value()) * 1e4)))
        .collect();
    if diff.is_empty() {
        return Err(Error::validation("curves share no horizon"));
    }
    Ok(diff)
}
