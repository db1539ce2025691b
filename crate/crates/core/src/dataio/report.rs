use std::io::Write;

use serde::Serialize;

use super::parse::{parse_fraction, reader};
use crate::error::{Error, Result};
use crate::estimators::PdCurve;
use crate::simulation::{RmseReport, SweepGrid};

/// One numeric (or empty) report cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Cell {
    /// A fraction shown as a percentage.
    Percent(f64),
    /// A dimensionless number shown as is.
    Number(f64),
    /// Basis points (0.0001 in fraction terms), stored in bp.
    BasisPoints(f64),
    Count(u64),
    Empty,
}

impl Cell {
    /// Raw machine value; fractions stay fractions.
    pub fn raw(&self) -> Option<f64> {
        match *self {
            Cell::Percent(v) | Cell::Number(v) | Cell::BasisPoints(v) => Some(v),
            Cell::Count(c) => Some(c as f64),
            Cell::Empty => None,
        }
    }

    fn raw_text(&self) -> String {
        match *self {
            Cell::Percent(v) | Cell::Number(v) | Cell::BasisPoints(v) => format!("{v:?}"),
            Cell::Count(c) => c.to_string(),
            Cell::Empty => String::new(),
        }
    }

    pub fn display(&self, decimals: usize) -> String {
        match *self {
            Cell::Percent(v) => format!("{:.*}%", decimals, v * 100.0),
            Cell::Number(v) => format!("{v:.decimals$}"),
            Cell::BasisPoints(v) => format!("{v:+.2} bp"),
            Cell::Count(c) => c.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub title: String,
    pub label_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Decimals used when rendering cells for display.
    pub decimals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Comma-delimited; each value column is followed by a `<name>_display`
    /// column with the rounded presentation.
    Delimited,
    /// Space-aligned columns of display values.
    AlignedText,
}

impl ReportTable {
    pub fn new(
        title: impl Into<String>,
        label_header: impl Into<String>,
        columns: Vec<String>,
    ) -> Self {
        ReportTable {
            title: title.into(),
            label_header: label_header.into(),
            columns,
            rows: Vec::new(),
            decimals: 6,
        }
    }

    pub fn with_decimals(mut self, decimals: usize) -> Self {
        self.decimals = decimals;
        self
    }

    pub fn push(&mut self, label: impl Into<String>, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(ReportRow {
            label: label.into(),
            cells,
        });
    }
}

fn horizon_label(t: usize) -> String {
    format!("def @{t}Y")
}

pub fn emit_report<W: Write>(table: &ReportTable, format: ReportFormat, mut out: W) -> Result<()> {
    match format {
        ReportFormat::Delimited => {
            writeln!(out, "# {}", table.title)?;
            let mut w = csv::Writer::from_writer(out);
            let mut header = vec![table.label_header.clone()];
            for c in &table.columns {
                header.push(c.clone());
                header.push(format!("{c}_display"));
            }
            w.write_record(&header)?;
            for row in &table.rows {
                let mut rec = vec![row.label.clone()];
                for cell in &row.cells {
                    rec.push(cell.raw_text());
                    rec.push(cell.display(table.decimals));
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        ReportFormat::AlignedText => {
            let mut grid = vec![std::iter::once(table.label_header.clone())
                .chain(table.columns.iter().cloned())
                .collect::<Vec<_>>()];
            for row in &table.rows {
                grid.push(
                    std::iter::once(row.label.clone())
                        .chain(row.cells.iter().map(|c| c.display(table.decimals)))
                        .collect(),
                );
            }
            let widths: Vec<usize> = (0..=table.columns.len())
                .map(|i| grid.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
                .collect();
            writeln!(out, "{}", table.title)?;
            for line in grid {
                let mut text = format!("{:<w$}", line[0], w = widths[0]);
                for (cell, w) in line.iter().zip(&widths).skip(1) {
                    text.push_str(&format!("  {cell:>w$}"));
                }
                writeln!(out, "{}", text.trim_end())?;
            }
        }
    }
    Ok(())
}

/// A delimited report read back: raw values per column, display columns dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub title: String,
    pub label_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

/// Reads a delimited report. Raw cells may use a decimal comma when the file
/// is semicolon or tab delimited.
pub fn parse_report_str(text: &str) -> Result<ParsedReport> {
    let title = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .map(|t| t.trim().to_owned())
        .unwrap_or_default();
    let mut rdr = reader(text);
    let header = rdr.headers()?.clone();
    let label_header = header.get(0).unwrap_or("").to_owned();
    let keep: Vec<usize> = (1..header.len())
        .filter(|&i| !header[i].ends_with("_display"))
        .collect();
    let columns = keep.iter().map(|&i| header[i].to_owned()).collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let values = keep
            .iter()
            .map(|&i| {
                let cell = record.get(i).unwrap_or("");
                if cell.is_empty() {
                    Ok(None)
                } else {
                    parse_fraction(cell).map(Some).ok_or_else(|| {
                        Error::parse(line, Some(&header[i]), format!("'{cell}' is not a number"))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((record.get(0).unwrap_or("").to_owned(), values));
    }
    Ok(ParsedReport {
        title,
        label_header,
        columns,
        rows,
    })
}

/// Curves side by side, one row per horizon.
pub fn curves_table(title: &str, curves: &[(&str, &PdCurve)]) -> ReportTable {
    let mut horizons: Vec<usize> = curves.iter().flat_map(|(_, c)| c.horizons()).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut table = ReportTable::new(
        title,
        "horizon",
        curves.iter().map(|(n, _)| n.to_string()).collect(),
    );
    for t in horizons {
        let cells = curves
            .iter()
            .map(|(_, c)| c.rate(t).map_or(Cell::Empty, |r| Cell::Percent(r.value())))
            .collect();
        table.push(horizon_label(t), cells);
    }
    table
}

/// One row per labelled curve, one column per horizon.
pub fn rating_table(title: &str, label_header: &str, rows: &[(&str, &PdCurve)]) -> ReportTable {
    let deepest = rows
        .iter()
        .filter_map(|(_, c)| c.horizons().last())
        .max()
        .unwrap_or(0);
    let mut table = ReportTable::new(
        title,
        label_header,
        (1..=deepest).map(horizon_label).collect(),
    )
    .with_decimals(2);
    for (label, curve) in rows {
        let cells = (1..=deepest)
            .map(|t| {
                curve
                    .rate(t)
                    .map_or(Cell::Empty, |r| Cell::Percent(r.value()))
            })
            .collect();
        table.push(*label, cells);
    }
    table
}

pub fn difference_table(title: &str, diff: &std::collections::BTreeMap<usize, f64>) -> ReportTable {
    let mut table = ReportTable::new(title, "horizon", vec!["difference_bp".into()]);
    for (&t, &bp) in diff {
        table.push(horizon_label(t), vec![Cell::BasisPoints(bp)]);
    }
    table
}

fn opt_number(v: Option<f64>) -> Cell {
    v.map_or(Cell::Empty, Cell::Number)
}

/// `(horizon, rmse_mr, rmse_rm, efficiency_ratio, ...)` rows.
pub fn rmse_table(title: &str, report: &RmseReport) -> ReportTable {
    let columns = [
        "rmse_mr",
        "rmse_rm",
        "efficiency_ratio",
        "mean_mr",
        "mean_rm",
        "rmse_se_mr",
        "rmse_se_rm",
        "ratio_se",
    ];
    let mut table = ReportTable::new(title, "horizon", columns.map(String::from).to_vec());
    for h in 0..report.horizons() {
        table.push(
            (h + 1).to_string(),
            vec![
                Cell::Percent(report.rmse_mr[h]),
                Cell::Percent(report.rmse_rm[h]),
                opt_number(report.efficiency_ratio[h]),
                Cell::Percent(report.mean_mr[h]),
                Cell::Percent(report.mean_rm[h]),
                Cell::Percent(report.rmse_se_mr[h]),
                Cell::Percent(report.rmse_se_rm[h]),
                opt_number(report.ratio_se[h]),
            ],
        );
    }
    table
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Plot series: one row per axis point, values averaged over horizons.
pub fn sweep_table(title: &str, grid: &SweepGrid) -> ReportTable {
    let columns = ["rmse_mr", "rmse_rm", "efficiency_ratio", "ratio_se"];
    let mut table = ReportTable::new(title, grid.axis.name(), columns.map(String::from).to_vec());
    for (v, r) in grid.values.iter().zip(&grid.reports) {
        let ratio = mean(r.efficiency_ratio.iter().flatten().copied());
        let se = mean(r.ratio_se.iter().flatten().copied());
        table.push(
            format!("{v}"),
            vec![
                Cell::Percent(mean(r.rmse_mr.iter().copied()).unwrap_or(0.0)),
                Cell::Percent(mean(r.rmse_rm.iter().copied()).unwrap_or(0.0)),
                opt_number(ratio),
                opt_number(se),
            ],
        );
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{parse_triangle_str, ParseOptions};
    use crate::estimators::{pd_curve, Estimator};

    fn toy_curves() -> (PdCurve, PdCurve) {
        let tri = parse_triangle_str(
            include_str!("../../fixtures/toy_triangle.csv"),
            &ParseOptions::default(),
        )
        .unwrap();
        (
            pd_curve(&tri, Estimator::MeanOfRatios).unwrap(),
            pd_curve(&tri, Estimator::RatioOfMeans).unwrap(),
        )
    }

    fn render(table: &ReportTable, format: ReportFormat) -> String {
        let mut buf = Vec::new();
        emit_report(table, format, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn toy_curves_render_at_six_decimals() {
        let (mr, rm) = toy_curves();
        let table = curves_table("toy", &[("Mean of Ratios", &mr), ("Ratio of Means", &rm)]);
        let text = render(&table, ReportFormat::AlignedText);
        assert!(
            text.contains("def @1Y       0.007106%       0.007265%"),
            "{text}"
        );
        assert!(text.contains("0.115979%"));
        let csv = render(&table, ReportFormat::Delimited);
        assert!(csv.starts_with("# toy\nhorizon,Mean of Ratios,Mean of Ratios_display,"));
    }

    #[test]
    fn delimited_report_reparses_to_same_fractions() {
        let (mr, rm) = toy_curves();
        let table = curves_table("toy", &[("mr", &mr), ("rm", &rm)]);
        let parsed = parse_report_str(&render(&table, ReportFormat::Delimited)).unwrap();
        assert_eq!(parsed.title, "toy");
        assert_eq!(parsed.columns, vec!["mr", "rm"]);
        for (row, t) in parsed.rows.iter().zip(1..) {
            assert_eq!(row.1[0], Some(mr.rate(t).unwrap().value()));
            assert_eq!(row.1[1], Some(rm.rate(t).unwrap().value()));
        }
    }

    #[test]
    fn decimal_comma_report_matches_decimal_point() {
        let point = "# t\nhorizon;a\n1;0.00125\n2;\n";
        let comma = "# t\nhorizon;a\n1;0,00125\n2;\n";
        assert_eq!(
            parse_report_str(point).unwrap(),
            parse_report_str(comma).unwrap()
        );
    }

    #[test]
    fn empty_cells_render_blank() {
        let mut t = ReportTable::new("x", "k", vec!["a".into()]);
        t.push("r", vec![Cell::Empty]);
        assert!(render(&t, ReportFormat::Delimited).ends_with("r,,\n"));
    }

    #[test]
    fn basis_point_display() {
        assert_eq!(Cell::BasisPoints(6.46).display(2), "+6.46 bp");
    }
}
