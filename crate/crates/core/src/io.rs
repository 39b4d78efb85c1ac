//! CSV input of observation matrices.
//!
//! One observation per row, all columns numeric. A first row that does not
//! parse as numbers is taken as a header; anything non-numeric later, ragged
//! rows, and NaN/infinite entries are rejected.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::DataMatrix;

fn parse_field(field: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Input(format!("row {row}, column {col}: '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite { row, col });
    }
    Ok(v)
}

/// Reads a numeric matrix from CSV text.
pub fn read_data<R: Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let is_header = line == 0 && record.iter().any(|f| f.parse::<f64>().is_err());
        if is_header {
            cols = Some(record.len());
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Input(format!(
                    "row {rows} has {} fields, expected {c}",
                    record.len()
                )))
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            values.push(parse_field(field, rows, j)?);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 {
        return Err(Error::Input("no data rows".into()));
    }
    DataMatrix::new(rows, cols, values)
}

/// Reads a numeric matrix from a CSV file.
pub fn read_data_file(path: &Path) -> Result<DataMatrix> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_data(std::io::BufReader::new(file))
}
