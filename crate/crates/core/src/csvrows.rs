//! Shared reader for the headered CSV inputs (observations and fire events).

use std::io::Read;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("csv read failed: {0}")]
    Read(#[from] csv::Error),
}

/// A rejected data row. `line` is the 1-based line number in the source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<RowError>,
}

impl<T> Parsed<T> {
    /// Data rows seen, accepted or not.
    pub fn rows(&self) -> usize {
        self.records.len() + self.errors.len()
    }
}

/// Reads RFC 4180 CSV with an exact header, converting each row with
/// `convert`. An empty source yields no records.
pub(crate) fn parse_rows<R, T, F>(source: R, header: &[&str], mut convert: F) -> Result<Parsed<T>, CsvError>
where
    R: Read,
    F: FnMut(&csv::StringRecord) -> Result<T, String>,
{
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
    let found = reader.headers()?.clone();
    let mut out = Parsed { records: Vec::new(), errors: Vec::new() };
    if found.is_empty() {
        return Ok(out);
    }
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(CsvError::BadHeader { expected: header.join(","), found: found.iter().collect::<Vec<_>>().join(",") });
    }
    for rec in reader.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            out.errors.push(RowError { line, message: format!("expected {} fields, found {}", header.len(), rec.len()) });
            continue;
        }
        match convert(&rec) {
            Ok(v) => out.records.push(v),
            Err(message) => out.errors.push(RowError { line, message }),
        }
    }
    Ok(out)
}

pub(crate) fn field_f64(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64, String> {
    let raw = rec.get(idx).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| format!("{name} is not a number: {raw:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} is not finite"))
    }
}

pub(crate) fn field_unit(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64, String> {
    let v = field_f64(rec, idx, name)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{name} out of range [0,1]"))
    }
}

pub(crate) fn field_date(rec: &csv::StringRecord, idx: usize) -> Result<chrono::NaiveDate, String> {
    let raw = rec.get(idx).unwrap_or("").trim();
    chrono::NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| format!("date is not YYYY-MM-DD: {raw:?}"))
}
