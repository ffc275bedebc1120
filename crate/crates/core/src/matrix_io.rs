//! Headerless CSV for dense matrices. Values are written in their shortest
//! round-tripping form, so a write/read cycle is lossless.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::spectral::write_row;

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in m.rows() {
        write_row(&mut out, row.iter().copied())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads rows of numbers; every row must have the same length.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: k + 1,
                    message: format!("invalid number {t:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()) {
            if row.len() != first {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!("expected {first} columns, found {}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let rows = read_rows(path)?;
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::Dimension(e.to_string()))
}
