//! Numeric CSV input and output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, Trim, WriterBuilder};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    /// Header name; requires a header row.
    Name(String),
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub response: ResponseColumn,
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            response: ResponseColumn::Last,
            has_header: true,
            delimiter: b',',
        }
    }
}

/// Scientific notation with 17 significant digits, enough to round-trip any
/// finite f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    parse_csv(File::open(path)?, opts)
}

/// Reads a numeric table. Lines are 1-based and columns 1-based in errors.
pub fn parse_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(false)
        .delimiter(opts.delimiter)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(reader);
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::ParseError {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if opts.has_header && header.is_none() {
            header = Some(rec.iter().map(str::to_string).collect());
            width = Some(rec.len());
            continue;
        }
        match width {
            Some(w) if w != rec.len() => {
                return Err(Error::ParseError {
                    line,
                    column: rec.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            None => width = Some(rec.len()),
            _ => {}
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumericCell {
                    line,
                    column: c + 1,
                    value: cell.to_string(),
                }
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    let width = width.unwrap_or(0);
    if width < 2 {
        return Err(Error::InvalidDataset("need at least one predictor and a response".into()));
    }
    let resp = match &opts.response {
        ResponseColumn::Last => width - 1,
        ResponseColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::ResponseColumnMissing(name.clone()))?,
    };
    let n = rows.len();
    let p = width - 1;
    let pred: Vec<usize> = (0..width).filter(|&c| c != resp).collect();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][pred[j]]);
    let y = DVector::from_fn(n, |i, _| rows[i][resp]);
    let data = Dataset::new(x, y)?;
    match header {
        Some(h) => data.with_column_names(pred.iter().map(|&c| h[c].clone()).collect()),
        None => Ok(data),
    }
}

/// Writes predictors then the response, with a header row.
pub fn write_csv<W: Write>(writer: W, data: &Dataset, response_name: &str) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(writer);
    let mut head: Vec<String> = (0..data.p()).map(|j| data.column_name(j)).collect();
    head.push(response_name.to_string());
    w.write_record(&head).map_err(csv_io)?;
    for i in 0..data.n() {
        let mut row: Vec<String> = (0..data.p()).map(|j| format_f64(data.x()[(i, j)])).collect();
        row.push(format_f64(data.y()[i]));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidDataset(format!("{other:?}")),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
