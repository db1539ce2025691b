//! Seeded Monte Carlo comparison of the two estimators.
//!
//! Each scenario draws `T` cohort sizes uniformly from
//! `[exposure_min, exposure_max]`, then for every (cohort, horizon) cell an
//! independent standard-normal shock `e` and a default count
//! `round((p + sigma * e) * N)` clamped into `[0, N]`. Both estimators are
//! evaluated per horizon on the resulting fully observed triangle.
//!
//! # Random streams
//!
//! Scenario `k` reads from ChaCha20 keyed by `ChaCha20Rng::seed_from_u64(master_seed)`
//! with stream id `k` (`set_stream(k)`). Within a stream the draws are, in
//! order: the `T` exposures (`Uniform::new_inclusive(min, max)`), then the
//! `T * H` shocks (`rand_distr::StandardNormal`) in cohort-major order, so
//! cell `(j, t)` is shock number `j * H + (t - 1)`. A scenario is therefore a
//! pure function of `(master_seed, k)` and can be evaluated on any thread.
//!
//! # Reduction
//!
//! Scenarios are grouped in fixed blocks of [`BLOCK_SCENARIOS`]; each block
//! is summed sequentially and the block sums are then added in block order.
//! The result is bit-identical for any worker count.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{mean_of_ratios_cells, ratio_of_means_cells, Rate};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_140_903;

pub const BLOCK_SCENARIOS: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Constant probability of default used to generate every cell.
    pub true_pd: Rate,
    /// Scale of the Gaussian perturbation added to `true_pd`.
    pub sigma: f64,
    /// Number of issue-year cohorts `T`.
    pub num_years: usize,
    pub exposure_min: u64,
    pub exposure_max: u64,
    pub num_scenarios: u64,
    pub master_seed: u64,
    pub horizons: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            true_pd: Rate::new(0.10).expect("valid"),
            sigma: 0.001,
            num_years: 10,
            exposure_min: 500,
            exposure_max: 10_000,
            num_scenarios: 100_000,
            master_seed: DEFAULT_SEED,
            horizons: 5,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::config(
                "sigma",
                format!("{} must be finite and non-negative", self.sigma),
            ));
        }
        if self.num_years == 0 {
            return Err(Error::config("years", "must be at least 1"));
        }
        if self.exposure_min == 0 {
            return Err(Error::config("exposure-min", "must be at least 1"));
        }
        if self.exposure_min > self.exposure_max {
            return Err(Error::config(
                "exposure-max",
                format!(
                    "{} is below exposure-min {}",
                    self.exposure_max, self.exposure_min
                ),
            ));
        }
        if self.num_scenarios == 0 {
            return Err(Error::config("scenarios", "must be at least 1"));
        }
        if self.horizons == 0 {
            return Err(Error::config("horizons", "must be at least 1"));
        }
        Ok(())
    }
}

/// One simulated triangle and both estimates at every horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDraw {
    pub exposures: Vec<u64>,
    /// `defaults[j][t - 1]` for cohort `j` at horizon `t`.
    pub defaults: Vec<Vec<u64>>,
    pub mr_estimate: Vec<Rate>,
    pub rm_estimate: Vec<Rate>,
}

/// Relative RMSE of both estimators per horizon (index `t - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub config: SimulationConfig,
    pub rmse_mr: Vec<f64>,
    pub rmse_rm: Vec<f64>,
    /// `rmse_mr / rmse_rm`; `None` where `rmse_rm` is zero.
    pub efficiency_ratio: Vec<Option<f64>>,
    pub mean_mr: Vec<f64>,
    pub mean_rm: Vec<f64>,
    /// Delta-method Monte Carlo standard errors of the relative RMSEs.
    pub rmse_se_mr: Vec<f64>,
    pub rmse_se_rm: Vec<f64>,
    /// Delta-method standard error of the efficiency ratio, accounting for
    /// the correlation between the two estimators' errors.
    pub ratio_se: Vec<Option<f64>>,
}

impl RmseReport {
    pub fn horizons(&self) -> usize {
        self.rmse_mr.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    Sigma,
    Years,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Sigma => "sigma",
            SweepAxis::Years => "years",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub reports: Vec<RmseReport>,
}

fn scenario_rng(config: &SimulationConfig, scenario_index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(config.master_seed);
    rng.set_stream(scenario_index);
    rng
}

fn exposures_from(config: &SimulationConfig, rng: &mut ChaCha20Rng) -> Vec<u64> {
    let dist = Uniform::new_inclusive(config.exposure_min, config.exposure_max);
    (0..config.num_years).map(|_| dist.sample(rng)).collect()
}

/// The `T` cohort sizes of scenario `scenario_index`.
pub fn draw_exposures(config: &SimulationConfig, scenario_index: u64) -> Result<Vec<u64>> {
    config.validate()?;
    Ok(exposures_from(
        config,
        &mut scenario_rng(config, scenario_index),
    ))
}

/// Default count for one cell: `(p + sigma * noise) * exposure`, rounded half
/// away from zero and clamped into `[0, exposure]`.
pub fn simulate_defaults(p: Rate, sigma: f64, exposure: u64, noise: f64) -> u64 {
    let raw = ((p.value() + sigma * noise) * exposure as f64).round();
    if raw.is_nan() || raw <= 0.0 {
        0
    } else if raw >= exposure as f64 {
        exposure
    } else {
        raw as u64
    }
}

fn generate(config: &SimulationConfig, scenario_index: u64) -> (Vec<u64>, Vec<Vec<u64>>) {
    let mut rng = scenario_rng(config, scenario_index);
    let exposures = exposures_from(config, &mut rng);
    let defaults = exposures
        .iter()
        .map(|&n| {
            (0..config.horizons)
                .map(|_| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    simulate_defaults(config.true_pd, config.sigma, n, noise)
                })
                .collect()
        })
        .collect();
    (exposures, defaults)
}

fn column<'a>(
    exposures: &'a [u64],
    defaults: &'a [Vec<u64>],
    h: usize,
) -> impl Iterator<Item = (u64, u64)> + 'a {
    exposures
        .iter()
        .zip(defaults)
        .map(move |(&n, row)| (n, row[h]))
}

/// Generates and evaluates scenario `scenario_index`.
pub fn run_scenario(config: &SimulationConfig, scenario_index: u64) -> Result<ScenarioDraw> {
    config.validate()?;
    let (exposures, defaults) = generate(config, scenario_index);
    let mut mr_estimate = Vec::with_capacity(config.horizons);
    let mut rm_estimate = Vec::with_capacity(config.horizons);
    for h in 0..config.horizons {
        mr_estimate.push(mean_of_ratios_cells(column(&exposures, &defaults, h))?.0);
        rm_estimate.push(ratio_of_means_cells(column(&exposures, &defaults, h))?.0);
    }
    Ok(ScenarioDraw {
        exposures,
        defaults,
        mr_estimate,
        rm_estimate,
    })
}

/// Order-insensitive per-horizon sums over scenarios.
#[derive(Debug, Clone)]
struct Moments {
    sum_mr: Vec<f64>,
    sum_rm: Vec<f64>,
    sse_mr: Vec<f64>,
    sse_rm: Vec<f64>,
    quad_mr: Vec<f64>,
    quad_rm: Vec<f64>,
    cross: Vec<f64>,
}

impl Moments {
    fn zero(h: usize) -> Self {
        Moments {
            sum_mr: vec![0.0; h],
            sum_rm: vec![0.0; h],
            sse_mr: vec![0.0; h],
            sse_rm: vec![0.0; h],
            quad_mr: vec![0.0; h],
            quad_rm: vec![0.0; h],
            cross: vec![0.0; h],
        }
    }

    fn add_draw(&mut self, p: f64, draw: &ScenarioDraw) {
        for h in 0..self.sum_mr.len() {
            let mr = draw.mr_estimate[h].value();
            let rm = draw.rm_estimate[h].value();
            let a = (mr - p) * (mr - p);
            let b = (rm - p) * (rm - p);
            self.sum_mr[h] += mr;
            self.sum_rm[h] += rm;
            self.sse_mr[h] += a;
            self.sse_rm[h] += b;
            self.quad_mr[h] += a * a;
            self.quad_rm[h] += b * b;
            self.cross[h] += a * b;
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        let pairs = [
            (&mut self.sum_mr, &other.sum_mr),
            (&mut self.sum_rm, &other.sum_rm),
            (&mut self.sse_mr, &other.sse_mr),
            (&mut self.sse_rm, &other.sse_rm),
            (&mut self.quad_mr, &other.quad_mr),
            (&mut self.quad_rm, &other.quad_rm),
            (&mut self.cross, &other.cross),
        ];
        for (acc, add) in pairs {
            acc.iter_mut().zip(add).for_each(|(a, b)| *a += b);
        }
        self
    }
}

fn block_moments(config: &SimulationConfig, block: u64) -> Result<Moments> {
    let start = block * BLOCK_SCENARIOS;
    let end = (start + BLOCK_SCENARIOS).min(config.num_scenarios);
    let mut m = Moments::zero(config.horizons);
    for k in start..end {
        m.add_draw(config.true_pd.value(), &run_scenario(config, k)?);
    }
    Ok(m)
}

fn report_from(config: &SimulationConfig, m: &Moments) -> RmseReport {
    let n = config.num_scenarios as f64;
    let p = config.true_pd.value();
    let h = config.horizons;
    let mut r = RmseReport {
        config: config.clone(),
        rmse_mr: Vec::with_capacity(h),
        rmse_rm: Vec::with_capacity(h),
        efficiency_ratio: Vec::with_capacity(h),
        mean_mr: Vec::with_capacity(h),
        mean_rm: Vec::with_capacity(h),
        rmse_se_mr: Vec::with_capacity(h),
        rmse_se_rm: Vec::with_capacity(h),
        ratio_se: Vec::with_capacity(h),
    };
    // Delta method on RMSE = sqrt(MSE): se(RMSE) = se(MSE) / (2 RMSE).
    let rmse_se = |mse: f64, quad: f64| {
        let var = (quad / n - mse * mse).max(0.0);
        if mse > 0.0 {
            (var / n).sqrt() / (2.0 * mse.sqrt()) / p
        } else {
            0.0
        }
    };
    for t in 0..h {
        let mse_mr = m.sse_mr[t] / n;
        let mse_rm = m.sse_rm[t] / n;
        let rmse_mr = mse_mr.sqrt() / p;
        let rmse_rm = mse_rm.sqrt() / p;
        let ratio = (rmse_rm > 0.0).then(|| rmse_mr / rmse_rm);
        let ratio_se = ratio.filter(|_| mse_mr > 0.0).map(|ratio| {
            let var_a = (m.quad_mr[t] / n - mse_mr * mse_mr).max(0.0);
            let var_b = (m.quad_rm[t] / n - mse_rm * mse_rm).max(0.0);
            let cov = m.cross[t] / n - mse_mr * mse_rm;
            let rel_var = var_a / (mse_mr * mse_mr) + var_b / (mse_rm * mse_rm)
                - 2.0 * cov / (mse_mr * mse_rm);
            ratio / 2.0 * (rel_var.max(0.0) / n).sqrt()
        });
        r.rmse_mr.push(rmse_mr);
        r.rmse_rm.push(rmse_rm);
        r.efficiency_ratio.push(ratio);
        r.mean_mr.push(m.sum_mr[t] / n);
        r.mean_rm.push(m.sum_rm[t] / n);
        r.rmse_se_mr.push(rmse_se(mse_mr, m.quad_mr[t]));
        r.rmse_se_rm.push(rmse_se(mse_rm, m.quad_rm[t]));
        r.ratio_se.push(ratio_se);
    }
    r
}

fn study(config: &SimulationConfig) -> Result<RmseReport> {
    config.validate()?;
    if config.true_pd.value() == 0.0 {
        return Err(Error::Domain(
            "relative RMSE is undefined for a true probability of default of zero".into(),
        ));
    }
    let blocks = config.num_scenarios.div_ceil(BLOCK_SCENARIOS);
    let partials = (0..blocks)
        .into_par_iter()
        .map(|b| block_moments(config, b))
        .collect::<Result<Vec<_>>>()?;
    let total = partials
        .iter()
        .fold(Moments::zero(config.horizons), |acc, m| acc.merge(m));
    Ok(report_from(config, &total))
}

/// Relative RMSE of both estimators over `num_scenarios` scenarios, on the
/// global rayon pool.
pub fn run_study(config: &SimulationConfig) -> Result<RmseReport> {
    study(config)
}

/// As [`run_study`], on a dedicated pool of `workers` threads.
pub fn run_study_with_workers(config: &SimulationConfig, workers: usize) -> Result<RmseReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("cannot build worker pool: {e}")))?;
    pool.install(|| study(config))
}

fn config_at(base: &SimulationConfig, axis: SweepAxis, value: f64) -> SimulationConfig {
    let mut c = base.clone();
    match axis {
        SweepAxis::Sigma => c.sigma = value,
        SweepAxis::Years => c.num_years = value as usize,
    }
    c
}

pub fn validate_axis(axis: SweepAxis, values: &[f64]) -> Result<()> {
    let name = axis.name();
    if values.is_empty() {
        return Err(Error::config(name, "no sweep values"));
    }
    if let Some(w) = values.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::config(
            name,
            format!(
                "values must be strictly increasing ({} then {})",
                w[0], w[1]
            ),
        ));
    }
    for &v in values {
        let ok = match axis {
            SweepAxis::Sigma => (0.0..=1.0).contains(&v),
            SweepAxis::Years => v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64,
        };
        if !ok {
            return Err(Error::config(name, format!("invalid sweep value {v}")));
        }
    }
    Ok(())
}

/// One study per axis point. Every point uses the base config's master seed,
/// so neighbouring points share random numbers.
pub fn sweep(base: &SimulationConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepGrid> {
    validate_axis(axis, values)?;
    let reports = values
        .iter()
        .map(|&v| run_study(&config_at(base, axis, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepGrid {
        axis,
        values: values.to_vec(),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenarios: u64) -> SimulationConfig {
        SimulationConfig {
            num_scenarios: scenarios,
            ..SimulationConfig::default()
        }
    }

    fn rate(v: f64) -> Rate {
        Rate::new(v).unwrap()
    }

    #[test]
    fn simulate_defaults_examples() {
        assert_eq!(simulate_defaults(rate(0.10), 0.0, 1000, 3.7), 100);
        assert_eq!(simulate_defaults(rate(0.10), 0.1, 1000, -2.0), 0);
        assert_eq!(simulate_defaults(rate(0.10), 0.001, 3518, 1.0), 355);
    }

    #[test]
    fn simulate_defaults_clamps_above_exposure() {
        assert_eq!(simulate_defaults(rate(0.9), 0.5, 100, 1.0), 100);
    }

    #[test]
    fn simulate_defaults_rounds_half_away_from_zero() {
        // 0.5 * 5 = 2.5 exactly
        assert_eq!(simulate_defaults(rate(0.5), 0.0, 5, 0.0), 3);
        assert_eq!(simulate_defaults(rate(0.25), 0.0, 2, 0.0), 1);
    }

    #[test]
    fn degenerate_exposure_interval() {
        let c = SimulationConfig {
            exposure_min: 500,
            exposure_max: 500,
            ..small(1)
        };
        assert!(draw_exposures(&c, 7).unwrap().iter().all(|&n| n == 500));
    }

    #[test]
    fn exposures_are_deterministic_per_index() {
        let c = small(1);
        assert_eq!(
            draw_exposures(&c, 3).unwrap(),
            draw_exposures(&c, 3).unwrap()
        );
        assert_ne!(
            draw_exposures(&c, 3).unwrap(),
            draw_exposures(&c, 4).unwrap()
        );
        let other = SimulationConfig {
            master_seed: 1,
            ..small(1)
        };
        assert_ne!(
            draw_exposures(&c, 3).unwrap(),
            draw_exposures(&other, 3).unwrap()
        );
    }

    #[test]
    fn exposure_mean_matches_uniform() {
        let c = SimulationConfig {
            num_years: 1,
            ..small(1)
        };
        let n = 100_000;
        let sum: u64 = (0..n).map(|k| draw_exposures(&c, k).unwrap()[0]).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean / 5250.0 - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn scenario_exposures_match_draw_exposures() {
        let c = small(1);
        assert_eq!(
            run_scenario(&c, 11).unwrap().exposures,
            draw_exposures(&c, 11).unwrap()
        );
    }

    #[test]
    fn zero_sigma_scenario_is_near_p() {
        let c = SimulationConfig {
            sigma: 0.0,
            ..small(1)
        };
        let d = run_scenario(&c, 0).unwrap();
        let bound = 0.5 / c.exposure_min as f64;
        for h in 0..c.horizons {
            assert!((d.mr_estimate[h].value() - 0.1).abs() <= bound);
            assert!((d.rm_estimate[h].value() - 0.1).abs() <= bound);
        }
    }

    #[test]
    fn single_cohort_estimators_coincide() {
        let c = SimulationConfig {
            num_years: 1,
            sigma: 0.05,
            ..small(1)
        };
        for k in 0..50 {
            let d = run_scenario(&c, k).unwrap();
            assert_eq!(d.mr_estimate, d.rm_estimate);
        }
    }

    #[test]
    fn scenario_cells_in_range() {
        let c = SimulationConfig {
            sigma: 0.5,
            ..small(1)
        };
        for k in 0..20 {
            let d = run_scenario(&c, k).unwrap();
            for (n, row) in d.exposures.iter().zip(&d.defaults) {
                assert!(row.iter().all(|x| x <= n));
            }
        }
    }

    #[test]
    fn zero_true_pd_is_domain_error() {
        let c = SimulationConfig {
            true_pd: Rate::ZERO,
            ..small(10)
        };
        assert!(matches!(run_study(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_configs_name_the_parameter() {
        let bad = SimulationConfig {
            exposure_min: 600,
            exposure_max: 500,
            ..small(1)
        };
        assert!(
            matches!(bad.validate(), Err(Error::Config { parameter, .. }) if parameter == "exposure-max")
        );
        let bad = SimulationConfig {
            sigma: -1.0,
            ..small(1)
        };
        assert!(
            matches!(bad.validate(), Err(Error::Config { parameter, .. }) if parameter == "sigma")
        );
        let bad = SimulationConfig {
            num_years: 0,
            ..small(1)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_sigma_study_within_rounding_bound() {
        let c = SimulationConfig {
            sigma: 0.0,
            ..small(2000)
        };
        let r = run_study(&c).unwrap();
        let bound = 0.5 / c.exposure_min as f64 / c.true_pd.value();
        assert!(r.rmse_mr.iter().chain(&r.rmse_rm).all(|&x| x <= bound));
    }

    #[test]
    fn study_block_boundaries_do_not_matter() {
        // A count that is not a multiple of the block size.
        let c = small(BLOCK_SCENARIOS + 17);
        let r = run_study(&c).unwrap();
        let mut sse = 0.0;
        for k in 0..c.num_scenarios {
            let e = run_scenario(&c, k).unwrap().rm_estimate[0].value() - 0.1;
            sse += e * e;
        }
        let direct = (sse / c.num_scenarios as f64).sqrt() / 0.1;
        assert!((r.rmse_rm[0] - direct).abs() < 1e-12);
    }

    #[test]
    fn axis_validation() {
        assert!(validate_axis(SweepAxis::Sigma, &[]).is_err());
        assert!(validate_axis(SweepAxis::Sigma, &[0.3, 0.1]).is_err());
        assert!(validate_axis(SweepAxis::Sigma, &[0.5, 1.5]).is_err());
        assert!(validate_axis(SweepAxis::Years, &[0.0]).is_err());
        assert!(validate_axis(SweepAxis::Years, &[2.5]).is_err());
        assert!(validate_axis(SweepAxis::Years, &[5.0, 10.0]).is_ok());
    }

    #[test]
    fn single_zero_sigma_sweep() {
        let c = small(2000);
        let g = sweep(&c, SweepAxis::Sigma, &[0.0]).unwrap();
        assert_eq!(g.reports.len(), 1);
        // Rounding is the only error left; the ratio of two tiny RMSEs need not be 1.
        let bound = 0.5 / c.exposure_min as f64 / c.true_pd.value();
        let r = &g.reports[0];
        assert!(r.rmse_mr.iter().chain(&r.rmse_rm).all(|&x| x <= bound));
    }

    #[test]
    fn equal_exposures_give_unit_ratio() {
        let c = SimulationConfig {
            exposure_min: 501,
            exposure_max: 501,
            ..small(300)
        };
        for sigma in [0.0, 0.01] {
            let r = run_study(&SimulationConfig { sigma, ..c.clone() }).unwrap();
            for (a, b) in r.rmse_mr.iter().zip(&r.rmse_rm) {
                assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "{a} {b}");
            }
        }
    }
}
