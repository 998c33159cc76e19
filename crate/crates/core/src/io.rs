//! CSV and JSON ingestion and export.

use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CapError, Result};
use crate::hierarchy::{HierarchyGraph, HierarchySpec};
use crate::model::{Dataset, Grouping, GroupingSpec};

fn parse_row(rec: &csv::StringRecord) -> Option<Vec<f64>> {
    rec.iter().map(|f| f.trim().parse::<f64>().ok()).collect()
}

/// Reads a numeric CSV matrix. A first row that does not parse as numbers
/// is treated as a header.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        match parse_row(&rec) {
            Some(r) => rows.push(r),
            None if i == 0 => continue,
            None => {
                return Err(CapError::InvalidData(format!(
                    "{}: non-numeric entry on line {}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(CapError::InvalidData(format!("{}: no data", path.display())));
    }
    if rows.iter().any(|r| r.len() != p) {
        return Err(CapError::DimensionMismatch(format!("{}: ragged rows", path.display())));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Reads a single-column CSV vector.
pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path.as_ref())?;
    if m.ncols() != 1 {
        return Err(CapError::DimensionMismatch(format!(
            "{}: expected one column, found {}",
            path.as_ref().display(),
            m.ncols()
        )));
    }
    Ok(m.column(0).into_owned())
}

pub fn load_dataset(x: impl AsRef<Path>, y: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::new(read_matrix_csv(x)?, read_vector_csv(y)?)
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let f = std::io::BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

pub fn read_grouping(path: impl AsRef<Path>, p: usize) -> Result<Grouping> {
    Grouping::from_spec(read_json::<GroupingSpec>(path)?, p)
}

pub fn read_hierarchy(path: impl AsRef<Path>) -> Result<(HierarchyGraph, HierarchySpec)> {
    let spec: HierarchySpec = read_json(path)?;
    Ok((HierarchyGraph::from_spec(&spec)?, spec))
}
