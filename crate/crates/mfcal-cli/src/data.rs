//! CSV dataset ingestion and export.
//!
//! Datasets are comma-delimited UTF-8 files with a header row; columns
//! are located by name, so extra columns and any column order are
//! fine. All referenced cells must parse as finite reals. Exports
//! write floats with 17 significant digits, which round-trips `f64`
//! exactly.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, Result};
use crate::report::{atomic_write, fmt_float};

/// Loads the named input and output columns from a CSV file.
///
/// Returns (inputs n×d, outputs n×p) with the row order of the file
/// preserved, replicated rows included. Errors name the file, the
/// offending column, and the 1-based data row.
pub fn load_dataset(
    path: &Path,
    input_names: &[String],
    output_names: &[String],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: bad header: {e}", path.display())))?
        .clone();
    let find = |name: &String| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Data(format!(
                "{}: missing column `{name}` (header has: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let input_idx: Vec<usize> = input_names.iter().map(find).collect::<Result<_>>()?;
    let output_idx: Vec<usize> = output_names.iter().map(find).collect::<Result<_>>()?;

    let mut x_rows: Vec<f64> = Vec::new();
    let mut y_rows: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record =
            record.map_err(|e| CliError::Data(format!("{}: row {row}: {e}", path.display())))?;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: row {row}: missing cell in column `{name}`",
                    path.display()
                ))
            })?;
            let v: f64 = raw.parse().map_err(|_| {
                CliError::Data(format!(
                    "{}: row {row}, column `{name}`: `{raw}` is not a number",
                    path.display()
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{}: row {row}, column `{name}`: `{raw}` is not finite",
                    path.display()
                )));
            }
            Ok(v)
        };
        for (k, &col) in input_idx.iter().enumerate() {
            x_rows.push(cell(col, &input_names[k])?);
        }
        for (k, &col) in output_idx.iter().enumerate() {
            y_rows.push(cell(col, &output_names[k])?);
        }
        n += 1;
    }
    if n < 2 {
        return Err(CliError::Data(format!(
            "{}: needs at least 2 data rows, found {n}",
            path.display()
        )));
    }
    Ok((
        DMatrix::from_row_slice(n, input_names.len(), &x_rows),
        DMatrix::from_row_slice(n, output_names.len(), &y_rows),
    ))
}

/// Writes a dataset in the same format `load_dataset` reads.
pub fn write_dataset(
    path: &Path,
    input_names: &[String],
    x: &DMatrix<f64>,
    output_names: &[String],
    y: &DMatrix<f64>,
) -> Result<()> {
    assert_eq!(x.nrows(), y.nrows(), "row counts must agree");
    assert_eq!(x.ncols(), input_names.len());
    assert_eq!(y.ncols(), output_names.len());
    let mut text = String::new();
    let header: Vec<&str> = input_names
        .iter()
        .chain(output_names)
        .map(|s| s.as_str())
        .collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for i in 0..x.nrows() {
        let mut fields: Vec<String> = Vec::with_capacity(header.len());
        for j in 0..x.ncols() {
            fields.push(fmt_float(x[(i, j)]));
        }
        for j in 0..y.ncols() {
            fields.push(fmt_float(y[(i, j)]));
        }
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}
