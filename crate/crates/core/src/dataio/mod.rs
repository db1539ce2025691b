//! Delimited file ingestion and report emission.
//!
//! Input files are UTF-8 with a header row, comma, semicolon or tab
//! delimited (detected from the header), LF or CRLF line endings. Lines
//! starting with `#` are comments. Unobserved horizons are empty cells;
//! zero is a legitimate default count.

mod parse;
mod report;

pub use parse::{
    parse_fraction, parse_panel, parse_panel_str, parse_triangle, parse_triangle_str, write_panel,
    write_triangle, ParseOptions,
};
pub use report::{
    curves_table, difference_table, emit_report, parse_report_str, rating_table, rmse_table,
    sweep_table, Cell, ParsedReport, ReportFormat, ReportRow, ReportTable,
};
