//! CSV ingestion for real-data estimation, and the matching writer.
//!
//! Dialect: comma separated, header row, UTF-8, `.` decimal point. A cell is
//! missing when it is empty or one of `NA`, `NaN`, `nan`, `.`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::write_atomic;
use crate::model::Dataset;

/// What happened to the input columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub n: usize,
    pub p: usize,
    pub x_columns: Vec<String>,
    /// Columns with a non-numeric, non-missing cell; never used.
    pub dropped_columns: Vec<String>,
    /// Missing cells inside dropped columns. Missing cells in used columns are errors.
    pub missing_values: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | ".")
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn dataset_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads the file without centering.
pub fn read_dataset_raw(
    path: &Path,
    outcome: &str,
    treatment: &str,
) -> Result<(Dataset, IngestionReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| dataset_err(path, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| dataset_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for (i, name) in header.iter().enumerate() {
        if header[..i].contains(name) {
            return Err(dataset_err(path, format!("duplicate column `{name}`")));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| dataset_err(path, format!("column `{name}` not found in header")))
    };
    let (iy, id) = (find(outcome)?, find(treatment)?);
    if iy == id {
        return Err(dataset_err(
            path,
            "outcome and treatment must be different columns",
        ));
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| dataset_err(path, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(dataset_err(
                path,
                format!(
                    "row {} has {} fields, header has {}",
                    r + 1,
                    rec.len(),
                    header.len()
                ),
            ));
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    let n = rows.len();
    if n <= 2 {
        return Err(dataset_err(
            path,
            format!("need at least 3 data rows, got {n}"),
        ));
    }

    // A column is numeric when every non-missing cell parses to a finite number.
    let numeric: Vec<bool> = (0..header.len())
        .map(|c| {
            rows.iter()
                .all(|row| is_missing(&row[c]) || parse_cell(&row[c]).is_some())
        })
        .collect();
    for &c in &[iy, id] {
        if !numeric[c] {
            let bad = rows
                .iter()
                .position(|row| !is_missing(&row[c]) && parse_cell(&row[c]).is_none());
            return Err(dataset_err(
                path,
                format!(
                    "column `{}` has a non-numeric value in row {}",
                    header[c],
                    bad.map_or(0, |r| r + 1)
                ),
            ));
        }
    }
    let used: Vec<usize> = (0..header.len()).filter(|&c| numeric[c]).collect();
    let mut missing = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        for &c in &used {
            if is_missing(&row[c]) {
                missing.push(format!("row {} column `{}`", r + 1, header[c]));
            }
        }
    }
    if !missing.is_empty() {
        let shown = missing
            .iter()
            .take(20)
            .cloned()
            .collect::<Vec<_>>()
            .join(", ");
        let more = if missing.len() > 20 {
            format!(" and {} more", missing.len() - 20)
        } else {
            String::new()
        };
        return Err(dataset_err(
            path,
            format!("{} missing value(s): {shown}{more}", missing.len()),
        ));
    }

    let xcols: Vec<usize> = used
        .iter()
        .copied()
        .filter(|&c| c != iy && c != id)
        .collect();
    let dropped: Vec<usize> = (0..header.len()).filter(|&c| !numeric[c]).collect();
    let missing_values = rows
        .iter()
        .map(|row| dropped.iter().filter(|&&c| is_missing(&row[c])).count())
        .sum();
    let value = |r: usize, c: usize| parse_cell(&rows[r][c]).unwrap_or(f64::NAN);
    let y = DVector::from_fn(n, |r, _| value(r, iy));
    let d = DVector::from_fn(n, |r, _| value(r, id));
    let x = DMatrix::from_fn(n, xcols.len(), |r, k| value(r, xcols[k]));
    let report = IngestionReport {
        n,
        p: xcols.len(),
        x_columns: xcols.iter().map(|&c| header[c].clone()).collect(),
        dropped_columns: dropped.iter().map(|&c| header[c].clone()).collect(),
        missing_values,
    };
    Ok((Dataset::new(y, d, x)?, report))
}

/// Reads and centers a dataset; every remaining numeric column becomes a control.
pub fn load_dataset(
    path: &Path,
    outcome: &str,
    treatment: &str,
) -> Result<(Dataset, IngestionReport)> {
    let (data, report) = read_dataset_raw(path, outcome, treatment)?;
    Ok((data.centered(), report))
}

/// Writes `y, d, x1..xp` with shortest round-trip float formatting, so a
/// reload reproduces every value exactly.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["y".to_string(), "d".to_string()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    let csv_err = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec = vec![data.y[i].to_string(), data.d[i].to_string()];
        rec.extend((0..data.p()).map(|j| data.x[(i, j)].to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))?;
    write_atomic(path, &bytes)
}
