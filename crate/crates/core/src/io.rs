//! CSV and JSON artifacts.
//!
//! Matrices are stored one row per line with a header row; floats use the
//! shortest representation that round-trips.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Reads a numeric CSV with a header row.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = idx + 2;
        if rec.len() != headers.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields, got {}", headers.len(), rec.len()) });
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse { line, msg: format!("bad number {field:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: format!("non-finite value {field:?}") });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 || headers.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no data", path.display())));
    }
    let m = DMatrix::from_row_slice(rows, headers.len(), &data);
    Ok((headers, m))
}

pub fn write_matrix_csv(path: &Path, headers: &[String], m: &DMatrix<f64>) -> Result<()> {
    if headers.len() != m.ncols() {
        return Err(Error::InvalidInput("header count does not match the columns".into()));
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(headers)?;
    for r in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|c| format!("{}", m[(r, c)])))?;
    }
    w.flush()?;
    Ok(())
}

/// Column names `prefix0, prefix1, …`.
pub fn numbered_headers(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

/// Reads the first column of a CSV with a header row as labels and maps
/// them to consecutive ids in sorted label order.
pub fn read_labels(path: &Path) -> Result<(Vec<usize>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_path(path)?;
    let mut raw = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let label = rec.get(0).ok_or(Error::Parse { line: idx + 2, msg: "empty record".into() })?;
        raw.push(label.to_owned());
    }
    if raw.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no labels", path.display())));
    }
    let ids: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = raw.iter().map(String::as_str).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
    };
    let labels = raw.iter().map(|s| ids[s.as_str()]).collect();
    let names = ids.keys().map(|s| s.to_string()).collect();
    Ok((labels, names))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
