use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::IncompleteMatrix;
use crate::error::{Error, Result};

/// CSV reading options. Empty cells are always treated as missing.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub missing_token: String,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            missing_token: "NaN".to_string(),
            has_header: false,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, missing_token: &str) -> Result<IncompleteMatrix> {
    load_csv_with(
        path,
        &CsvOptions {
            missing_token: missing_token.to_string(),
            has_header: false,
        },
    )
}

pub fn load_csv_with(path: impl AsRef<Path>, options: &CsvOptions) -> Result<IncompleteMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<IncompleteMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut width: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                line,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                if cell.is_empty() || cell == options.missing_token {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                        line,
                        message: format!("column {}: `{cell}` is not a number", col + 1),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    IncompleteMatrix::from_rows(&rows)
}

/// Write values row-major with `missing_token` in unobserved cells.
pub fn write_csv<W: Write>(data: &IncompleteMatrix, missing_token: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for i in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols())
            .map(|j| match data.get(i, j) {
                Some(v) => v.to_string(),
                None => missing_token.to_string(),
            })
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Write the mask as a 0/1 CSV (1 = observed).
pub fn write_mask_csv<W: Write>(data: &IncompleteMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for i in 0..data.nrows() {
        let row: Vec<&str> = (0..data.ncols())
            .map(|j| if data.is_observed(i, j) { "1" } else { "0" })
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e.to_string()))
}
