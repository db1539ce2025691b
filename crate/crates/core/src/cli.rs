//! Command-line front end: `estimate`, `simulate` and `sweep`.
//!
//! Every command writes its reports plus a `manifest.json` into a run
//! directory (`--out`, default `runs/<unix-seconds>-<seed>`).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataio::{
    curves_table, difference_table, emit_report, parse_panel_str, parse_triangle_str, rating_table,
    rmse_table, sweep_table, ParseOptions, ReportFormat, ReportTable,
};
use crate::error::{Error, Result};
use crate::estimators::{
    aggregate_by_rating, curve_difference, pd_curve, portfolio_rollup, Estimator, PdCurve,
    PortfolioPanel, Rate, Rollup,
};
use crate::simulation::{
    run_study, run_study_with_workers, sweep, validate_axis, SimulationConfig, SweepAxis,
    DEFAULT_SEED,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "cohortpd",
    version,
    about = "Cohort probability-of-default estimation and estimator simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate PD curves from a triangle or portfolio panel file.
    Estimate(EstimateArgs),
    /// Monte Carlo RMSE comparison of the two estimators.
    Simulate(SimulateArgs),
    /// Repeat the simulation across values of sigma or years.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    Mr,
    Rm,
    Both,
}

impl EstimatorChoice {
    fn estimators(self) -> Vec<Estimator> {
        match self {
            EstimatorChoice::Mr => vec![Estimator::MeanOfRatios],
            EstimatorChoice::Rm => vec![Estimator::RatioOfMeans],
            EstimatorChoice::Both => Estimator::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RollupChoice {
    Pooled,
    MeanOverRatings,
    Both,
}

impl RollupChoice {
    fn rollups(self) -> Vec<Rollup> {
        match self {
            RollupChoice::Pooled => vec![Rollup::PooledTotals],
            RollupChoice::MeanOverRatings => vec![Rollup::MeanOverRatings],
            RollupChoice::Both => vec![Rollup::PooledTotals, Rollup::MeanOverRatings],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisChoice {
    Sigma,
    Years,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    /// Triangle (issue_year,issued,d1..) or panel (year,rating,issued,d1..) file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub estimator: EstimatorChoice,
    /// Also write one curve per rating class (panel input only).
    #[arg(long)]
    pub by_rating: bool,
    #[arg(long, value_enum, default_value = "both")]
    pub rollup: RollupChoice,
    /// Accept thousands separators such as `3.385` in count cells.
    #[arg(long)]
    pub lenient: bool,
    /// Percent decimals in displayed rates.
    #[arg(long, default_value_t = 6)]
    pub decimals: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// True probability of default.
    #[arg(long, default_value_t = 0.10)]
    pub p: f64,
    #[arg(long, default_value_t = 0.001)]
    pub sigma: f64,
    /// Number of issue-year cohorts.
    #[arg(long, default_value_t = 10)]
    pub years: usize,
    #[arg(long, default_value_t = 500)]
    pub exposure_min: u64,
    #[arg(long, default_value_t = 10_000)]
    pub exposure_max: u64,
    #[arg(long, default_value_t = 100_000)]
    pub scenarios: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub horizons: usize,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    pub workers: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn config(&self) -> Result<SimulationConfig> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::config("p", format!("{} must lie in (0, 1]", self.p)));
        }
        let config = SimulationConfig {
            true_pd: Rate::new(self.p)?,
            sigma: self.sigma,
            num_years: self.years,
            exposure_min: self.exposure_min,
            exposure_max: self.exposure_max,
            num_scenarios: self.scenarios,
            master_seed: self.seed,
            horizons: self.horizons,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: AxisChoice,
    /// Comma-separated, strictly increasing axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub base: SimulateArgs,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to replay a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub master_seed: Option<u64>,
    pub configuration: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

impl RunManifest {
    fn new(command: &str, master_seed: Option<u64>, configuration: impl Serialize) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            master_seed,
            configuration: serde_json::to_value(configuration)?,
            inputs: Vec::new(),
        })
    }
}

/// Exit status for an error: 1 usage/config, 2 input validation, 3 internal.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_USAGE,
        Error::EmptyCohort
        | Error::HorizonUnobserved(_)
        | Error::Validation(_)
        | Error::Domain(_)
        | Error::Parse { .. }
        | Error::Csv(_) => EXIT_VALIDATION,
        Error::Io(_) | Error::Json(_) => EXIT_INTERNAL,
    }
}

fn default_out(tag: &str) -> PathBuf {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    PathBuf::from("runs").join(format!("{secs}-{tag}"))
}

fn write_table(dir: &Path, stem: &str, table: &ReportTable) -> Result<()> {
    let mut csv = Vec::new();
    emit_report(table, ReportFormat::Delimited, &mut csv)?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    let mut txt = Vec::new();
    emit_report(table, ReportFormat::AlignedText, &mut txt)?;
    fs::write(dir.join(format!("{stem}.txt")), txt)?;
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn is_panel_header(text: &str) -> bool {
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    header
        .split([',', ';', '\t'])
        .nth(1)
        .is_some_and(|c| c.trim().eq_ignore_ascii_case("rating"))
}

fn rollup_name(r: Rollup) -> &'static str {
    match r {
        Rollup::PooledTotals => "pooled",
        Rollup::MeanOverRatings => "mean_over_ratings",
    }
}

fn rollup_label(e: Estimator, r: Rollup) -> String {
    match r {
        Rollup::PooledTotals => e.label().to_owned(),
        Rollup::MeanOverRatings => format!("Mean of {}", e.label()),
    }
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<PathBuf> {
    let bytes = fs::read(&args.input).map_err(|e| {
        Error::config(
            "input",
            format!("cannot read {}: {e}", args.input.display()),
        )
    })?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::validation(format!("{} is not UTF-8", args.input.display())))?;
    let opts = ParseOptions {
        lenient_thousands: args.lenient,
    };
    let estimators = args.estimator.estimators();
    let in_context = |e: Error| match e {
        Error::Parse { location, message } => Error::Parse {
            location,
            message: format!("{}: {message}", args.input.display()),
        },
        other => other,
    };

    // Compute everything before touching the output directory.
    let mut tables: Vec<(String, ReportTable)> = Vec::new();
    if is_panel_header(&text) {
        let panels = parse_panel_str(&text, &opts).map_err(in_context)?;
        tables.extend(panel_tables(&panels, &estimators, args)?);
    } else {
        let tri = parse_triangle_str(&text, &opts).map_err(in_context)?;
        let curves = estimators
            .iter()
            .map(|&e| pd_curve(&tri, e))
            .collect::<Result<Vec<_>>>()?;
        let named: Vec<(&str, &PdCurve)> =
            curves.iter().map(|c| (c.estimator.label(), c)).collect();
        tables.push((
            "curves".into(),
            curves_table("Probability of default by horizon", &named).with_decimals(args.decimals),
        ));
        if let [mr, rm] = curves.as_slice() {
            tables.push((
                "difference".into(),
                difference_table(
                    "Mean of Ratios minus Ratio of Means",
                    &curve_difference(mr, rm)?,
                ),
            ));
        }
    }

    let out = args.out.clone().unwrap_or_else(|| default_out("estimate"));
    fs::create_dir_all(&out)?;
    for (stem, table) in &tables {
        write_table(&out, stem, table)?;
    }
    let mut manifest = RunManifest::new("estimate", None, args)?;
    manifest.inputs.push(InputDigest {
        path: args.input.display().to_string(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    });
    write_json(&out, "manifest.json", &manifest)?;
    Ok(out)
}

fn panel_tables(
    panels: &[PortfolioPanel],
    estimators: &[Estimator],
    args: &EstimateArgs,
) -> Result<Vec<(String, ReportTable)>> {
    let rollups = args.rollup.rollups();
    let mut tables = Vec::new();
    let mut portfolio: Vec<(String, Rollup, PdCurve)> = Vec::new();

    for &est in estimators {
        for &r in &rollups {
            portfolio.push((rollup_label(est, r), r, portfolio_rollup(panels, est, r)?));
        }

        // Pooled curve of each vintage on its own.
        let vintages = panels
            .iter()
            .map(|p| {
                let curve = portfolio_rollup(std::slice::from_ref(p), est, Rollup::PooledTotals)?;
                Ok((p.year().to_string(), curve))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<(&str, &PdCurve)> = vintages.iter().map(|(y, c)| (y.as_str(), c)).collect();
        tables.push((
            format!("vintages_{}", est.short()),
            rating_table(
                &format!("{} per vintage year", est.label()),
                "vintage",
                &rows,
            ),
        ));

        if args.by_rating {
            let per_rating = aggregate_by_rating(panels, est)?;
            let mut rows: Vec<(&str, &PdCurve)> =
                per_rating.iter().map(|(r, c)| (r.as_str(), c)).collect();
            rows.extend(
                portfolio
                    .iter()
                    .filter(|(_, _, c)| c.estimator == est)
                    .map(|(label, _, c)| (label.as_str(), c)),
            );
            tables.push((
                format!("by_rating_{}", est.short()),
                rating_table(
                    &format!("{} by rating class, all years", est.label()),
                    "rating",
                    &rows,
                ),
            ));
        }
    }

    let named: Vec<(&str, &PdCurve)> = portfolio.iter().map(|(l, _, c)| (l.as_str(), c)).collect();
    tables.push((
        "portfolio".into(),
        curves_table("Portfolio probability of default", &named).with_decimals(args.decimals),
    ));

    if estimators.len() == 2 {
        for &r in &rollups {
            let find = |e: Estimator| {
                portfolio
                    .iter()
                    .find(|(_, rr, c)| *rr == r && c.estimator == e)
                    .map(|(_, _, c)| c)
                    .expect("both estimators computed")
            };
            let diff =
                curve_difference(find(Estimator::MeanOfRatios), find(Estimator::RatioOfMeans))?;
            tables.push((
                format!("difference_{}", rollup_name(r)),
                difference_table(
                    &format!("Mean of Ratios minus Ratio of Means ({})", rollup_name(r)),
                    &diff,
                ),
            ));
        }
    }
    Ok(tables)
}

fn study_with(
    config: &SimulationConfig,
    workers: Option<usize>,
) -> Result<crate::simulation::RmseReport> {
    match workers {
        Some(w) => run_study_with_workers(config, w),
        None => run_study(config),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<PathBuf> {
    let config = args.config()?;
    let report = study_with(&config, args.workers)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out(&config.master_seed.to_string()));
    fs::create_dir_all(&out)?;
    let title = format!(
        "Relative RMSE, p={} sigma={} T={} scenarios={}",
        args.p, args.sigma, args.years, args.scenarios
    );
    write_table(&out, "rmse", &rmse_table(&title, &report))?;
    write_json(&out, "report.json", &report)?;
    write_json(
        &out,
        "manifest.json",
        &RunManifest::new("simulate", Some(config.master_seed), args)?,
    )?;
    Ok(out)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<PathBuf> {
    let base = args.base.config()?;
    let axis = match args.axis {
        AxisChoice::Sigma => SweepAxis::Sigma,
        AxisChoice::Years => SweepAxis::Years,
    };
    validate_axis(axis, &args.values)?;
    let grid = match args.base.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Domain(format!("cannot build worker pool: {e}")))?
            .install(|| sweep(&base, axis, &args.values))?,
        None => sweep(&base, axis, &args.values)?,
    };
    let out = args
        .base
        .out
        .clone()
        .unwrap_or_else(|| default_out(&base.master_seed.to_string()));
    fs::create_dir_all(&out)?;
    let title = format!("RMSE sweep over {}", axis.name());
    write_table(&out, "sweep", &sweep_table(&title, &grid))?;
    write_json(&out, "sweep.json", &grid)?;
    write_json(
        &out,
        "manifest.json",
        &RunManifest::new("sweep", Some(base.master_seed), args)?,
    )?;
    Ok(out)
}

pub fn run(cli: &Cli) -> Result<PathBuf> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}
