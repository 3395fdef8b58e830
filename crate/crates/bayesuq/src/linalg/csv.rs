//! Header-free CSV serialization for dense matrices, used for test fixtures
//! and for loading user-supplied linear models in the batch front-end.

use super::{DenseMatrix, LinOp};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Render a matrix as header-free CSV, one row per line. Values use the
/// shortest representation that round-trips through `f64` parsing.
pub fn dense_to_csv_string(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row = m.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_dense_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, dense_to_csv_string(m))?;
    Ok(())
}

pub fn parse_dense_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {}: not a number: '{tok}'", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

pub fn read_dense_csv(path: &Path) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_dense_csv(&text)
}
