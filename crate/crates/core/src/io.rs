//! CSV and JSON input/output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{AuxiliaryMatrix, DataMatrix};

/// A numeric table: optional row labels taken from the first column, column
/// labels from the header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    pub values: DMatrix<f64>,
}

fn parse_cell(s: &str, line: usize, col: usize) -> Result<f64> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Err(Error::Validation(format!(
            "missing value at line {line}, column {col}"
        )));
    }
    let v: f64 = t.parse().map_err(|_| {
        Error::Validation(format!("cannot parse '{t}' at line {line}, column {col}"))
    })?;
    if !v.is_finite() {
        return Err(Error::Validation(format!(
            "non-finite value at line {line}, column {col}"
        )));
    }
    Ok(v)
}

/// Reads a CSV with a header row. With `row_labels` the first column holds
/// labels and is excluded from the numeric values.
pub fn read_table(path: &Path, row_labels: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let skip = usize::from(row_labels);
    if header.len() <= skip {
        return Err(Error::Validation(format!("{}: no data columns", path.display())));
    }
    let columns = header[skip..].to_vec();
    let mut rows = Vec::new();
    let mut flat = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != header.len() {
            return Err(Error::Validation(format!(
                "{}: line {line} has {} fields, expected {}",
                path.display(),
                rec.len(),
                header.len()
            )));
        }
        if row_labels {
            rows.push(rec[0].trim().to_string());
        }
        for (c, cell) in rec.iter().enumerate().skip(skip) {
            flat.push(parse_cell(cell, line, c + 1)?);
        }
    }
    let n = flat.len() / columns.len();
    let values = DMatrix::from_row_slice(n, columns.len(), &flat);
    Ok(Table {
        columns,
        rows,
        values,
    })
}

pub fn write_table(
    path: &Path,
    columns: &[String],
    rows: Option<(&str, &[String])>,
    values: &DMatrix<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = Vec::new();
    if let Some((label, _)) = rows {
        header.push(label.to_string());
    }
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for i in 0..values.nrows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some((_, names)) = rows {
            rec.push(names[i].clone());
        }
        rec.extend(values.row(i).iter().map(|v| format_float(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same f64.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

pub fn read_data(path: &Path) -> Result<DataMatrix> {
    let t = read_table(path, false)?;
    DataMatrix::with_names(t.values, t.columns)
}

/// Reads the auxiliary matrix; the first column names the node each row
/// belongs to and rows are reordered to follow `node_names`.
pub fn read_auxiliary(path: &Path, node_names: &[String]) -> Result<AuxiliaryMatrix> {
    let t = read_table(path, true)?;
    if t.rows.len() != node_names.len() {
        return Err(Error::Validation(format!(
            "auxiliary file has {} rows for {} nodes",
            t.rows.len(),
            node_names.len()
        )));
    }
    let mut values = DMatrix::zeros(node_names.len(), t.columns.len());
    for (i, name) in node_names.iter().enumerate() {
        let src = t.rows.iter().position(|r| r == name).ok_or_else(|| {
            Error::Validation(format!("node '{name}' missing from auxiliary file"))
        })?;
        values.set_row(i, &t.values.row(src));
    }
    AuxiliaryMatrix::with_names(values, t.columns)
}

pub fn write_data(path: &Path, data: &DataMatrix) -> Result<()> {
    write_table(path, data.node_names(), None, data.values())
}

pub fn write_auxiliary(path: &Path, aux: &AuxiliaryMatrix, node_names: &[String]) -> Result<()> {
    write_table(path, aux.var_names(), Some(("node", node_names)), aux.values())
}

pub fn write_adjacency(path: &Path, adj: &DMatrix<bool>, node_names: &[String]) -> Result<()> {
    let m = adj.map(|b| if b { 1.0 } else { 0.0 });
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node".to_string()];
    header.extend(node_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..m.nrows() {
        let mut rec = vec![node_names[i].clone()];
        rec.extend(m.row(i).iter().map(|v| format!("{}", *v as u8)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_adjacency(path: &Path) -> Result<(Vec<String>, DMatrix<bool>)> {
    let t = read_table(path, true)?;
    if t.values.nrows() != t.values.ncols() {
        return Err(Error::Validation("adjacency matrix must be square".into()));
    }
    Ok((t.columns, t.values.map(|v| v != 0.0)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Reads edges.csv-style output: node_i, node_j and a PPI column.
pub fn read_edge_ppis(path: &Path, node_names: &[String]) -> Result<DMatrix<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Validation(format!("{}: no '{name}' column", path.display())))
    };
    let (ci, cj, cp) = (col("node_i")?, col("node_j")?, col("ppi")?);
    let p = node_names.len();
    let index = |s: &str| {
        node_names
            .iter()
            .position(|n| n == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown node '{s}' in edge file")))
    };
    let mut m = DMatrix::zeros(p, p);
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (i, j) = (index(&rec[ci])?, index(&rec[cj])?);
        let v = parse_cell(&rec[cp], k + 2, cp + 1)?;
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}
