//! CSV matrices, JSON documents and preprocessing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::DataMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Header {
    Present,
    Absent,
    /// Treat the first row as a header when any of its cells is not a number.
    Detect,
}

#[derive(Debug, Clone)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub header: Header,
    pub delimiter: u8,
}

impl DatasetFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            header: Header::Detect,
            delimiter: b',',
        }
    }
}

fn parse_cell(cell: &str, line: usize, col: usize) -> Result<f64> {
    let t = cell.trim();
    let v: f64 = t.parse().map_err(|_| Error::Parse {
        line,
        col,
        reason: format!("'{t}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            col,
            reason: format!("non-finite value '{t}'"),
        });
    }
    Ok(v)
}

/// Reads an observations-by-variables matrix. Lines and columns in errors
/// are 1-based.
pub fn load_matrix(file: &DatasetFile) -> Result<DataMatrix> {
    let f = File::open(&file.path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(file.delimiter)
        .from_reader(BufReader::new(f));
    let mut labels: Option<Vec<String>> = None;
    let mut data: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(idx + 1, |p| p.line() as usize),
            col: 0,
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if idx == 0 {
            let numeric = rec.iter().all(|c| c.trim().parse::<f64>().is_ok());
            let is_header = match file.header {
                Header::Present => true,
                Header::Absent => false,
                Header::Detect => !numeric,
            };
            if is_header {
                labels = Some(rec.iter().map(|c| c.trim().to_string()).collect());
                width = Some(rec.len());
                continue;
            }
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                line,
                col: rec.len().min(w) + 1,
                reason: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            data.push(parse_cell(cell, line, c + 1)?);
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    if rows < 2 || d < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 rows and 2 columns, found {rows} x {d}"
        )));
    }
    let values = DMatrix::from_row_slice(rows, d, &data);
    match labels {
        Some(l) => DataMatrix::new(values, l),
        None => Ok(DataMatrix::unlabeled(values)),
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `x` with a header row of labels.
pub fn save_matrix(path: &Path, x: &DataMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    write_rows(&mut w, &x.labels, &x.values)?;
    w.flush()?;
    Ok(())
}

/// Writes a bare matrix with labels `V1..Vd`.
pub fn save_dense(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let labels: Vec<String> = (1..=m.ncols()).map(|j| format!("V{j}")).collect();
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    write_rows(&mut w, &labels, m)?;
    w.flush()?;
    Ok(())
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io(e.into());
    w.write_record(labels).map_err(csv_err)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| fmt_f64(v))).map_err(csv_err)?;
    }
    Ok(())
}

/// Optional `log(1 + x)`, then per-column centring and scaling to unit sample
/// variance.
pub fn preprocess(x: &DataMatrix, log_transform: bool, standardize: bool) -> Result<DataMatrix> {
    let mut values = x.values.clone();
    if log_transform {
        for c in 0..values.ncols() {
            for r in 0..values.nrows() {
                let v = values[(r, c)];
                if v < 0.0 {
                    return Err(Error::NegativeUnderLog { row: r, col: c });
                }
                values[(r, c)] = v.ln_1p();
            }
        }
    }
    if standardize {
        let n = values.nrows();
        if n < 2 {
            return Err(Error::Shape("standardizing needs at least 2 rows".into()));
        }
        let mut zero = Vec::new();
        for (c, mut col) in values.column_iter_mut().enumerate() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
            let var = col.norm_squared() / (n - 1) as f64;
            if var <= 0.0 || !var.is_finite() {
                zero.push(c);
            } else {
                col /= var.sqrt();
            }
        }
        if !zero.is_empty() {
            return Err(Error::ZeroVariance { columns: zero });
        }
    }
    DataMatrix::new(values, x.labels.clone())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
