//! Machine-readable report files (JSON or CSV) and human stdout tables.
//!
//! JSON and CSV modes carry the same values: every report is a flat row
//! table, with report-level scalars repeated per row in CSV. Floats are
//! written in shortest round-trip form in both modes, so a cross-format read
//! recovers identical bits.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Row-table view of a report for CSV output.
pub trait CsvTable {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}

fn to_csv<T: CsvTable>(report: &T) -> String {
    let mut out = String::new();
    out.push_str(&report.csv_header().join(","));
    out.push('\n');
    for row in report.csv_rows() {
        let escaped: Vec<String> = row.iter().map(|f| csv_escape(f)).collect();
        out.push_str(&escaped.join(","));
        out.push('\n');
    }
    out
}

/// Writes the machine-readable artifact when `--out` was given.
pub fn write_report<T: Serialize + CsvTable>(
    report: &T,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<(), CliError> {
    let Some(path) = out else { return Ok(()) };
    let body = match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        OutputFormat::Csv => to_csv(report),
    };
    fs::write(path, body).map_err(|e| {
        CliError::Lib(logitbank::Error::Io { path: path.display().to_string(), source: e })
    })
}

/// Prints one stdout line, exiting quietly if the downstream pipe closed.
/// Machine artifacts are always written before any stdout rendering, so an
/// early reader (`| head`) loses nothing.
pub fn say(line: impl AsRef<str>) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if writeln!(out, "{}", line.as_ref()).is_err() {
        std::process::exit(0);
    }
}

/// Fixed-width stdout table; floats rendered at 4 decimals for reading.
pub fn print_table(headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(&format!("{:<width$}", cell, width = widths[i]));
        }
        say(s.trim_end());
    };
    line(headers.to_vec());
    let separators: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(separators.iter().map(String::as_str).collect());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
}

pub fn human_f64(v: f64) -> String {
    format!("{v:.4}")
}
