use std::collections::BTreeMap;
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::{Error, Result};
use crate::estimators::{CohortRecord, CohortTriangle, PortfolioPanel};

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Accept thousands separators in count cells, e.g. `3.385` or `71,675`.
    ///
    /// Only cells shaped exactly like grouped thousands are rewritten; anything
    /// else is still rejected.
    pub lenient_thousands: bool,
}

pub(crate) fn detect_delimiter(text: &str) -> u8 {
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    if header.contains(';') {
        b';'
    } else if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

pub(crate) fn reader(text: &str) -> csv::Reader<&[u8]> {
    ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(Trim::All)
        .from_reader(text.trim_start_matches('\u{feff}').as_bytes())
}

fn is_grouped_thousands(cell: &str) -> bool {
    let Some(sep) = cell.chars().find(|c| *c == '.' || *c == ',') else {
        return false;
    };
    let mut groups = cell.split(sep);
    let head = groups.next().unwrap_or("");
    (1..=3).contains(&head.len())
        && head.bytes().all(|b| b.is_ascii_digit())
        && groups.all(|g| g.len() == 3 && g.bytes().all(|b| b.is_ascii_digit()))
}

fn parse_count(cell: &str, opts: &ParseOptions, line: u64, column: &str) -> Result<u64> {
    let owned;
    let digits = if opts.lenient_thousands && is_grouped_thousands(cell) {
        owned = cell.replace(['.', ','], "");
        owned.as_str()
    } else {
        cell
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::parse(
            line,
            Some(column),
            format!("'{cell}' is not a non-negative integer count"),
        ));
    }
    digits
        .parse()
        .map_err(|_| Error::parse(line, Some(column), format!("count '{cell}' out of range")))
}

fn parse_year(cell: &str, line: u64, column: &str) -> Result<i32> {
    cell.parse()
        .map_err(|_| Error::parse(line, Some(column), format!("'{cell}' is not a year")))
}

/// Parses a fraction, accepting a decimal comma and an optional `%` suffix.
pub fn parse_fraction(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    let (body, scale) = match cell.strip_suffix('%') {
        Some(b) => (b.trim_end(), 100.0),
        None => (cell, 1.0),
    };
    let normalized = if body.contains(',') && !body.contains('.') {
        body.replace(',', ".")
    } else {
        body.to_owned()
    };
    normalized.parse::<f64>().ok().map(|v| v / scale)
}

fn check_header(header: &StringRecord, fixed: &[&[&str]]) -> Result<usize> {
    for (i, accepted) in fixed.iter().enumerate() {
        let got = header.get(i).unwrap_or("");
        if !accepted.iter().any(|a| a.eq_ignore_ascii_case(got)) {
            return Err(Error::parse(
                1,
                Some(got),
                format!("expected header column {} to be '{}'", i + 1, accepted[0]),
            ));
        }
    }
    let horizons = header.len().saturating_sub(fixed.len());
    if horizons == 0 {
        return Err(Error::parse(1, None, "header has no horizon columns"));
    }
    Ok(horizons)
}

/// Reads the horizon cells of one row, enforcing contiguous observability.
fn parse_horizons(
    record: &StringRecord,
    header: &StringRecord,
    first: usize,
    opts: &ParseOptions,
    line: u64,
) -> Result<Vec<u64>> {
    if record.len() > header.len() && record.iter().skip(header.len()).any(|c| !c.is_empty()) {
        return Err(Error::parse(line, None, "more cells than header columns"));
    }
    let mut defaults = Vec::new();
    let mut gap: Option<&str> = None;
    for col in first..header.len() {
        let name = &header[col];
        let cell = record.get(col).unwrap_or("");
        if cell.is_empty() {
            gap.get_or_insert(name);
            continue;
        }
        if let Some(empty) = gap {
            return Err(Error::parse(
                line,
                Some(name),
                format!(
                    "observed cell follows unobserved column '{empty}' (non-contiguous horizons)"
                ),
            ));
        }
        defaults.push(parse_count(cell, opts, line, name)?);
    }
    Ok(defaults)
}

fn record_line(record: &StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn locate(e: Error, line: u64) -> Error {
    match e {
        Error::Validation(msg) => Error::parse(line, None, msg),
        other => other,
    }
}

pub fn parse_triangle_str(text: &str, opts: &ParseOptions) -> Result<CohortTriangle> {
    let mut rdr = reader(text);
    let header = rdr.headers()?.clone();
    let horizons = check_header(&header, &[&["issue_year", "year"], &["issued"]])?;

    let mut cohorts: Vec<(u64, CohortRecord)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let line = record_line(&record);
        let year = parse_year(record.get(0).unwrap_or(""), line, &header[0])?;
        let issued = parse_count(record.get(1).unwrap_or(""), opts, line, &header[1])?;
        let defaults = parse_horizons(&record, &header, 2, opts, line)?;
        if let Some((prev, _)) = cohorts.iter().find(|(_, c)| c.issue_year() == year) {
            return Err(Error::parse(
                line,
                Some(&header[0]),
                format!("duplicate issue year {year} (first on line {prev})"),
            ));
        }
        let rec = CohortRecord::new(year, issued, defaults).map_err(|e| locate(e, line))?;
        cohorts.push((line, rec));
    }
    if cohorts.is_empty() {
        return Err(Error::validation("no rows"));
    }
    CohortTriangle::from_unsorted(cohorts.into_iter().map(|(_, c)| c).collect(), horizons)
}

pub fn parse_triangle<R: Read>(mut input: R, opts: &ParseOptions) -> Result<CohortTriangle> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    parse_triangle_str(&text, opts)
}

/// Parses a rating × vintage file into one panel per vintage year.
///
/// Panels come out in increasing year order; rating order follows first
/// appearance in the file.
pub fn parse_panel_str(text: &str, opts: &ParseOptions) -> Result<Vec<PortfolioPanel>> {
    let mut rdr = reader(text);
    let header = rdr.headers()?.clone();
    let horizons = check_header(&header, &[&["year"], &["rating"], &["issued"]])?;

    let mut rating_order: Vec<String> = Vec::new();
    let mut by_year: BTreeMap<i32, Vec<(String, CohortRecord)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let line = record_line(&record);
        let year = parse_year(record.get(0).unwrap_or(""), line, &header[0])?;
        let rating = record.get(1).unwrap_or("").to_owned();
        if rating.is_empty() {
            return Err(Error::parse(line, Some(&header[1]), "empty rating label"));
        }
        let issued = parse_count(record.get(2).unwrap_or(""), opts, line, &header[2])?;
        let defaults = parse_horizons(&record, &header, 3, opts, line)?;
        let rec = CohortRecord::new(year, issued, defaults).map_err(|e| locate(e, line))?;

        let rows = by_year.entry(year).or_default();
        if rows.iter().any(|(r, _)| *r == rating) {
            return Err(Error::parse(
                line,
                Some(&header[1]),
                format!("duplicate (year, rating) pair ({year}, {rating})"),
            ));
        }
        if !rating_order.contains(&rating) {
            rating_order.push(rating.clone());
        }
        rows.push((rating, rec));
    }
    if by_year.is_empty() {
        return Err(Error::validation("no rows"));
    }

    let asymmetric: Vec<String> = rating_order
        .iter()
        .filter_map(|r| {
            let absent: Vec<String> = by_year
                .iter()
                .filter(|(_, rows)| !rows.iter().any(|(x, _)| x == r))
                .map(|(y, _)| y.to_string())
                .collect();
            (!absent.is_empty()).then(|| format!("{r} (missing in {})", absent.join(", ")))
        })
        .collect();
    if !asymmetric.is_empty() {
        return Err(Error::validation(format!(
            "inconsistent rating sets across years: {}",
            asymmetric.join("; ")
        )));
    }

    by_year
        .into_iter()
        .map(|(year, mut rows)| {
            let classes = rating_order
                .iter()
                .map(|r| {
                    let idx = rows
                        .iter()
                        .position(|(x, _)| x == r)
                        .expect("checked above");
                    let (rating, rec) = rows.swap_remove(idx);
                    Ok((rating, CohortTriangle::new(vec![rec], horizons)?))
                })
                .collect::<Result<Vec<_>>>()?;
            PortfolioPanel::new(year, classes)
        })
        .collect()
}

pub fn parse_panel<R: Read>(mut input: R, opts: &ParseOptions) -> Result<Vec<PortfolioPanel>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    parse_panel_str(&text, opts)
}

fn horizon_cells(defaults: &[u64], horizons: usize) -> impl Iterator<Item = String> + '_ {
    (0..horizons).map(move |i| defaults.get(i).map(u64::to_string).unwrap_or_default())
}

/// Writes a triangle in the canonical comma-delimited format.
pub fn write_triangle<W: Write>(triangle: &CohortTriangle, out: W) -> Result<()> {
    let h = triangle.max_horizon();
    let mut w = csv::Writer::from_writer(out);
    let header = ["issue_year".to_owned(), "issued".to_owned()]
        .into_iter()
        .chain((1..=h).map(|t| format!("d{t}")));
    w.write_record(header)?;
    for c in triangle.cohorts() {
        let row = [c.issue_year().to_string(), c.issued().to_string()]
            .into_iter()
            .chain(horizon_cells(c.cumulative_defaults(), h));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes panels in the canonical comma-delimited format, one row per
/// (year, rating, cohort).
pub fn write_panel<W: Write>(panels: &[PortfolioPanel], out: W) -> Result<()> {
    let h = panels
        .iter()
        .map(PortfolioPanel::max_horizon)
        .max()
        .unwrap_or(1);
    let mut w = csv::Writer::from_writer(out);
    let header = ["year".to_owned(), "rating".to_owned(), "issued".to_owned()]
        .into_iter()
        .chain((1..=h).map(|t| format!("d{t}")));
    w.write_record(header)?;
    for panel in panels {
        for (rating, tri) in panel.rating_classes() {
            for c in tri.cohorts() {
                let row = [
                    c.issue_year().to_string(),
                    rating.clone(),
                    c.issued().to_string(),
                ]
                .into_iter()
                .chain(horizon_cells(c.cumulative_defaults(), h));
                w.write_record(row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ratio_of_means;

    const TOY: &str = include_str!("../../fixtures/toy_triangle.csv");
    const PANEL: &str = include_str!("../../fixtures/portfolio_2008_2011.csv");

    fn opts() -> ParseOptions {
        ParseOptions::default()
    }

    #[test]
    fn toy_fixture_parses() {
        let tri = parse_triangle_str(TOY, &opts()).unwrap();
        assert_eq!(tri.cohorts().len(), 4);
        assert_eq!(tri.max_horizon(), 5);
        assert!((ratio_of_means(&tri, 1).unwrap().percent() - 0.007265).abs() < 5e-7);
    }

    #[test]
    fn single_row_file() {
        let tri = parse_triangle_str(
            "issue_year,issued,d1,d2,d3,d4,d5\n2006,3385,0,1,2,2,3\n",
            &opts(),
        )
        .unwrap();
        assert_eq!(tri.cohorts()[0].cumulative_defaults(), &[0, 1, 2, 2, 3]);
    }

    #[test]
    fn rows_are_sorted_by_year() {
        let text = "issue_year;issued;d1;d2\r\n2009;10;1;\r\n2008;10;0;1\r\n";
        let tri = parse_triangle_str(text, &opts()).unwrap();
        let years: Vec<_> = tri.cohorts().iter().map(|c| c.issue_year()).collect();
        assert_eq!(years, vec![2008, 2009]);
    }

    #[test]
    fn non_contiguous_row_rejected_with_location() {
        let text = "issue_year,issued,d1,d2,d3,d4\n2006,100,0,1,,2\n";
        let err = parse_triangle_str(text, &opts()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("d4"), "{msg}");
    }

    #[test]
    fn defaults_over_issued_rejected() {
        let err = parse_triangle_str("issue_year,issued,d1\n2006,3,4\n", &opts()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_year_rejected() {
        let text = "issue_year,issued,d1\n2006,3,1\n2006,4,1\n";
        assert!(parse_triangle_str(text, &opts())
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }

    #[test]
    fn empty_file_rejected() {
        assert!(parse_triangle_str("issue_year,issued,d1\n", &opts())
            .unwrap_err()
            .to_string()
            .contains("no rows"));
        assert!(parse_panel_str("", &opts()).is_err());
        assert!(parse_panel_str("year,rating,issued,d1\n", &opts())
            .unwrap_err()
            .to_string()
            .contains("no rows"));
    }

    #[test]
    fn thousands_separators_need_lenient_mode() {
        let text = "issue_year,issued,d1\n2006,\"3.385\",1\n";
        assert!(parse_triangle_str(text, &opts()).is_err());
        let lenient = ParseOptions {
            lenient_thousands: true,
        };
        let tri = parse_triangle_str(text, &lenient).unwrap();
        assert_eq!(tri.cohorts()[0].issued(), 3385);
        let semi = "issue_year;issued;d1\n2006;71.675;867\n";
        assert_eq!(
            parse_triangle_str(semi, &lenient).unwrap().cohorts()[0].issued(),
            71675
        );
        // not grouped thousands: still rejected
        assert!(parse_triangle_str("issue_year;issued;d1\n2006;3,38;1\n", &lenient).is_err());
    }

    #[test]
    fn counts_reject_signs_and_decimals() {
        for bad in ["-1", "1.5", "1e3", "x"] {
            let text = format!("issue_year,issued,d1\n2006,100,{bad}\n");
            assert!(parse_triangle_str(&text, &opts()).is_err(), "{bad}");
        }
    }

    #[test]
    fn panel_fixture_structure() {
        let panels = parse_panel_str(PANEL, &opts()).unwrap();
        assert_eq!(panels.len(), 4);
        assert!(panels.iter().all(|p| p.rating_classes().len() == 12));
        let p2008 = &panels[0];
        assert_eq!(p2008.year(), 2008);
        let issued: u64 = p2008
            .rating_classes()
            .iter()
            .map(|(_, t)| t.cohorts()[0].issued())
            .sum();
        let d1: u64 = p2008
            .rating_classes()
            .iter()
            .map(|(_, t)| t.cohorts()[0].defaults_at(1).unwrap())
            .sum();
        assert_eq!((issued, d1), (71675, 867));
        assert_eq!(p2008.rating_ids().next(), Some("M01"));
    }

    #[test]
    fn panel_rating_asymmetry_reported() {
        let text = "year,rating,issued,d1\n2008,A,10,1\n2008,B,10,1\n2009,A,10,1\n2009,C,10,1\n";
        let msg = parse_panel_str(text, &opts()).unwrap_err().to_string();
        assert!(
            msg.contains("B (missing in 2009)") && msg.contains("C (missing in 2008)"),
            "{msg}"
        );
    }

    #[test]
    fn panel_duplicate_pair_rejected() {
        let text = "year,rating,issued,d1\n2008,A,10,1\n2008,A,11,1\n";
        assert!(parse_panel_str(text, &opts()).is_err());
    }

    #[test]
    fn fraction_locales_agree() {
        assert_eq!(parse_fraction("0,0284%"), parse_fraction("0.0284%"));
        assert_eq!(parse_fraction("0,125"), Some(0.125));
        assert_eq!(parse_fraction("12.5%"), Some(0.125));
        assert_eq!(parse_fraction("abc"), None);
    }

    #[test]
    fn write_then_parse_triangle() {
        let tri = parse_triangle_str(TOY, &opts()).unwrap();
        let mut buf = Vec::new();
        write_triangle(&tri, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(parse_triangle_str(&text, &opts()).unwrap(), tri);
        assert_eq!(text, TOY);
    }
}
