use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A default probability or default rate as a fraction in `[0, 1]`.
///
/// Percent rendering happens only when reporting.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Rate(value))
        } else {
            Err(Error::validation(format!("rate {value} outside [0, 1]")))
        }
    }

    /// Builds a rate from a quotient that is in `[0, 1]` up to rounding.
    pub(crate) fn from_quotient(value: f64) -> Self {
        debug_assert!(value.is_finite() && value > -1e-12 && value < 1.0 + 1e-12);
        Rate(value.clamp(0.0, 1.0))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn percent(self) -> f64 {
        self.0 * 100.0
    }
}

impl TryFrom<f64> for Rate {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Rate::new(value)
    }
}

impl From<Rate> for f64 {
    fn from(rate: Rate) -> f64 {
        rate.0
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.*}%", p, self.percent()),
            None => write!(f, "{}%", self.percent()),
        }
    }
}

/// One issue-year cohort: its issued count and cumulative defaults by horizon.
///
/// `cumulative_defaults[t - 1]` holds the defaults observed by horizon `t`.
/// The vector is shorter than the triangle's maximum horizon when later
/// horizons are not yet observable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortRecord {
    issue_year: i32,
    issued: u64,
    cumulative_defaults: Vec<u64>,
}

impl CohortRecord {
    pub fn new(issue_year: i32, issued: u64, cumulative_defaults: Vec<u64>) -> Result<Self> {
        if issued == 0 && !cumulative_defaults.is_empty() {
            return Err(Error::validation(format!(
                "cohort {issue_year}: default counts present but issued is zero"
            )));
        }
        for (i, &d) in cumulative_defaults.iter().enumerate() {
            if d > issued {
                return Err(Error::validation(format!(
                    "cohort {issue_year}: defaults {d} at horizon {} exceed issued {issued}",
                    i + 1
                )));
            }
        }
        if let Some(i) = cumulative_defaults.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::validation(format!(
                "cohort {issue_year}: cumulative defaults decrease from horizon {} to {}",
                i + 1,
                i + 2
            )));
        }
        Ok(CohortRecord {
            issue_year,
            issued,
            cumulative_defaults,
        })
    }

    pub fn issue_year(&self) -> i32 {
        self.issue_year
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    pub fn cumulative_defaults(&self) -> &[u64] {
        &self.cumulative_defaults
    }

    /// Number of horizons observed for this cohort.
    pub fn observed_horizons(&self) -> usize {
        self.cumulative_defaults.len()
    }

    /// Cumulative defaults at 1-based horizon `t`, if observed.
    pub fn defaults_at(&self, t: usize) -> Option<u64> {
        t.checked_sub(1)
            .and_then(|i| self.cumulative_defaults.get(i).copied())
    }

    /// Defaults occurring in each horizon interval (derived from the cumulative counts).
    pub fn marginal_defaults(&self) -> Vec<u64> {
        let mut prev = 0;
        self.cumulative_defaults
            .iter()
            .map(|&d| {
                let m = d - prev;
                prev = d;
                m
            })
            .collect()
    }
}

/// Cohorts ordered by issue year, observed over a ragged but contiguous set
/// of horizons `1..=max_horizon`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortTriangle {
    cohorts: Vec<CohortRecord>,
    max_horizon: usize,
}

impl CohortTriangle {
    /// Cohorts must already be in strictly increasing issue-year order.
    pub fn new(cohorts: Vec<CohortRecord>, max_horizon: usize) -> Result<Self> {
        if max_horizon == 0 {
            return Err(Error::validation("max horizon must be positive"));
        }
        if let Some(w) = cohorts
            .windows(2)
            .find(|w| w[1].issue_year <= w[0].issue_year)
        {
            return Err(Error::validation(format!(
                "issue years not strictly increasing: {} followed by {}",
                w[0].issue_year, w[1].issue_year
            )));
        }
        if let Some(c) = cohorts.iter().find(|c| c.observed_horizons() > max_horizon) {
            return Err(Error::validation(format!(
                "cohort {} observes {} horizons, more than the maximum {max_horizon}",
                c.issue_year,
                c.observed_horizons()
            )));
        }
        Ok(CohortTriangle {
            cohorts,
            max_horizon,
        })
    }

    /// Sorts cohorts by issue year, rejecting duplicates.
    pub fn from_unsorted(mut cohorts: Vec<CohortRecord>, max_horizon: usize) -> Result<Self> {
        cohorts.sort_by_key(|c| c.issue_year);
        if let Some(w) = cohorts
            .windows(2)
            .find(|w| w[1].issue_year == w[0].issue_year)
        {
            return Err(Error::validation(format!(
                "duplicate issue year {}",
                w[0].issue_year
            )));
        }
        Self::new(cohorts, max_horizon)
    }

    pub fn cohorts(&self) -> &[CohortRecord] {
        &self.cohorts
    }

    pub fn max_horizon(&self) -> usize {
        self.max_horizon
    }

    pub fn is_empty(&self) -> bool {
        self.cohorts.is_empty()
    }

    /// `(issued, cumulative defaults at t)` for every cohort observing horizon `t`.
    pub fn observers(&self, t: usize) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.cohorts
            .iter()
            .filter_map(move |c| c.defaults_at(t).map(|d| (c.issued, d)))
    }

    /// Deepest horizon observed by any cohort.
    pub fn deepest_observed(&self) -> usize {
        self.cohorts
            .iter()
            .map(CohortRecord::observed_horizons)
            .max()
            .unwrap_or(0)
    }
}

/// One vintage year of a portfolio, split into rating classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortfolioPanel {
    year: i32,
    rating_classes: Vec<(String, CohortTriangle)>,
}

impl PortfolioPanel {
    pub fn new(year: i32, rating_classes: Vec<(String, CohortTriangle)>) -> Result<Self> {
        for (i, (id, tri)) in rating_classes.iter().enumerate() {
            if rating_classes[..i].iter().any(|(other, _)| other == id) {
                return Err(Error::validation(format!(
                    "panel {year}: duplicate rating class '{id}'"
                )));
            }
            if tri.max_horizon() != rating_classes[0].1.max_horizon() {
                return Err(Error::validation(format!(
                    "panel {year}: rating '{id}' uses a different horizon convention"
                )));
            }
        }
        Ok(PortfolioPanel {
            year,
            rating_classes,
        })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn rating_classes(&self) -> &[(String, CohortTriangle)] {
        &self.rating_classes
    }

    pub fn rating_ids(&self) -> impl Iterator<Item = &str> {
        self.rating_classes.iter().map(|(id, _)| id.as_str())
    }

    pub fn triangle(&self, rating: &str) -> Option<&CohortTriangle> {
        self.rating_classes
            .iter()
            .find(|(id, _)| id == rating)
            .map(|(_, t)| t)
    }

    pub fn max_horizon(&self) -> usize {
        self.rating_classes
            .first()
            .map(|(_, t)| t.max_horizon())
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    MeanOfRatios,
    RatioOfMeans,
}

impl Estimator {
    pub const ALL: [Estimator; 2] = [Estimator::MeanOfRatios, Estimator::RatioOfMeans];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::MeanOfRatios => "Mean of Ratios",
            Estimator::RatioOfMeans => "Ratio of Means",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Estimator::MeanOfRatios => "mr",
            Estimator::RatioOfMeans => "rm",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How rating classes are combined into a portfolio-level curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rollup {
    /// Sum all rating classes into one triangle, then estimate.
    PooledTotals,
    /// Unweighted mean of the per-rating curves.
    MeanOverRatings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rate: Rate,
    /// Cohorts (or, for a mean over ratings, rating curves) behind this point.
    pub cohorts_used: usize,
}

/// Estimated probability of default per horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdCurve {
    pub estimator: Estimator,
    pub points: BTreeMap<usize, CurvePoint>,
}

impl PdCurve {
    pub fn rate(&self, t: usize) -> Option<Rate> {
        self.points.get(&t).map(|p| p.rate)
    }

    pub fn horizons(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.keys().copied()
    }

    pub fn rates(&self) -> impl Iterator<Item = (usize, Rate)> + '_ {
        self.points.iter().map(|(&t, p)| (t, p.rate))
    }
}
