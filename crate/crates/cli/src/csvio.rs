use std::path::Path;

use dro_ci::Sample;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    /// 1-based data row (the header is not counted) and column.
    #[error("row {row}, column {col}: `{cell}` is not a number")]
    Parse { row: usize, col: usize, cell: String },
    #[error("row {row} has {found} fields, header has {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("no data rows")]
    EmptyData,
}

/// Reads a headed CSV of numeric columns, one observation per row.
pub fn parse_csv(path: &Path) -> Result<Sample, CsvError> {
    let bytes = std::fs::read(path).map_err(|e| CsvError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_csv_bytes(&bytes).map_err(|e| match e {
        CsvError::Io { message, .. } => CsvError::Io { path: path.display().to_string(), message },
        other => other,
    })
}

pub fn parse_csv_bytes(bytes: &[u8]) -> Result<Sample, CsvError> {
    let io = |e: csv::Error| CsvError::Io { path: String::new(), message: e.to_string() };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(bytes);
    let dim = reader.headers().map_err(io)?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(io)?;
        let row = r + 1;
        if record.len() != dim {
            return Err(CsvError::Ragged { row, expected: dim, found: record.len() });
        }
        for (c, cell) in record.iter().enumerate() {
            // str::parse is locale independent
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => return Err(CsvError::Parse { row, col: c + 1, cell: cell.to_string() }),
            }
        }
        rows += 1;
    }
    if rows == 0 || dim == 0 {
        return Err(CsvError::EmptyData);
    }
    Ok(Sample::new(data, dim).expect("finite rectangular data"))
}
