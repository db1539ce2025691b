use cohortpd::simulation::{
    run_scenario, run_study, run_study_with_workers, sweep, SimulationConfig, SweepAxis,
};

fn config(scenarios: u64) -> SimulationConfig {
    SimulationConfig {
        num_scenarios: scenarios,
        ..SimulationConfig::default()
    }
}

#[test]
fn scenario_estimates_within_cohort_rate_range() {
    for sigma in [0.001, 0.1, 0.6] {
        let c = SimulationConfig { sigma, ..config(1) };
        for k in 0..200 {
            let d = run_scenario(&c, k).unwrap();
            for h in 0..c.horizons {
                let rates: Vec<f64> = d
                    .exposures
                    .iter()
                    .zip(&d.defaults)
                    .map(|(&n, row)| row[h] as f64 / n as f64)
                    .collect();
                let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for est in [d.mr_estimate[h].value(), d.rm_estimate[h].value()] {
                    assert!((0.0..=1.0).contains(&est));
                    assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
                }
            }
        }
    }
}

#[test]
fn scenario_is_a_pure_function_of_seed_and_index() {
    let c = config(1);
    assert_eq!(run_scenario(&c, 99).unwrap(), run_scenario(&c, 99).unwrap());
}

#[test]
fn study_identical_across_worker_counts() {
    let c = config(5000);
    let a = run_study_with_workers(&c, 1).unwrap();
    let b = run_study_with_workers(&c, 3).unwrap();
    let d = run_study(&c).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, d);
}

#[test]
fn equal_exposures_make_estimators_coincide() {
    let c = SimulationConfig {
        exposure_min: 2500,
        exposure_max: 2500,
        sigma: 0.01,
        ..config(1)
    };
    for k in 0..100 {
        let d = run_scenario(&c, k).unwrap();
        for (a, b) in d.mr_estimate.iter().zip(&d.rm_estimate) {
            assert!((a.value() - b.value()).abs() <= 1e-12);
        }
    }
}

#[test]
fn rmse_decreases_with_more_cohorts() {
    let base = config(4000);
    let grid = sweep(&base, SweepAxis::Years, &[5.0, 20.0, 100.0]).unwrap();
    for h in 0..base.horizons {
        for w in grid.reports.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let tol_mr = 2.0 * (a.rmse_se_mr[h].powi(2) + b.rmse_se_mr[h].powi(2)).sqrt();
            let tol_rm = 2.0 * (a.rmse_se_rm[h].powi(2) + b.rmse_se_rm[h].powi(2)).sqrt();
            assert!(b.rmse_mr[h] < a.rmse_mr[h] + tol_mr);
            assert!(b.rmse_rm[h] < a.rmse_rm[h] + tol_rm);
        }
    }
}

#[test]
fn unbiased_at_small_sigma() {
    let r = run_study(&config(5000)).unwrap();
    for h in 0..r.horizons() {
        assert!((r.mean_mr[h] - 0.1).abs() < 1e-4);
        assert!((r.mean_rm[h] - 0.1).abs() < 1e-4);
    }
}

#[test]
fn standard_errors_are_small_relative_to_rmse() {
    let r = run_study(&config(20_000)).unwrap();
    for h in 0..r.horizons() {
        assert!(r.rmse_se_mr[h] > 0.0 && r.rmse_se_mr[h] < 0.02 * r.rmse_mr[h]);
        assert!(r.ratio_se[h].unwrap() < 0.02);
    }
}
