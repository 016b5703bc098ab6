//! Headerless row-major CSV for real matrices.
//!
//! Values are written in scientific notation with 17 significant digits,
//! which is enough for every `f64` to survive a write/read cycle bit for bit.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_error(path, e))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|x| format_value(*x))).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        match ncols {
            None => ncols = Some(record.len()),
            Some(n) if n != record.len() => {
                return Err(CliError::format(
                    path,
                    format!("row {} has {} columns, expected {n}", nrows + 1, record.len()),
                ))
            }
            Some(_) => {}
        }
        for field in record.iter() {
            let x: f64 = field
                .parse()
                .map_err(|_| CliError::format(path, format!("row {}: '{field}' is not a number", nrows + 1)))?;
            values.push(x);
        }
        nrows += 1;
    }
    match ncols {
        Some(n) if n > 0 => Ok(DMatrix::from_row_slice(nrows, n, &values)),
        _ => Err(CliError::format(path, "matrix file is empty")),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => CliError::format(path, format!("{other:?}")),
        }
    } else {
        CliError::format(path, e.to_string())
    }
}
