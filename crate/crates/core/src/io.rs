//! CSV ingestion and export.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so an
//! exported dataset reads back bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use crate::classical::Dataset;
use crate::error::{Error, Result};
use crate::numkit::{RMatrix, RVector};

/// A parsed numeric table with 1-based source line numbers per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
    pub lines: Vec<usize>,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Reads a comma-separated numeric table. The first row is a header when
/// none of its cells parses as a number.
pub fn parse_table(reader: impl Read) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header = None;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 1, e.to_string())
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if i == 0 && rec.iter().all(|c| c.parse::<f64>().is_err()) {
            header = Some(rec.iter().map(str::to_string).collect());
            width = Some(rec.len());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(parse_err(
                line,
                rec.len().min(w) + 1,
                format!("expected {w} columns, found {}", rec.len()),
            ));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(parse_err(line, c + 1, format!("non-finite value {cell:?}"))),
                Err(_) => Err(parse_err(line, c + 1, format!("not a number: {cell:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        lines.push(line);
    }
    Ok(Table {
        header,
        rows,
        lines,
    })
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_table(std::io::BufReader::new(file))
}

fn last_line(t: &Table) -> usize {
    t.lines
        .last()
        .copied()
        .unwrap_or(usize::from(t.header.is_some()))
}

/// Builds a dataset from a table whose last column is `y`, or whose every
/// column belongs to `X` when `y` is given separately.
pub fn dataset_from_tables(main: &Table, y: Option<&Table>) -> Result<Dataset> {
    let n = main.rows.len();
    if n < 2 {
        return Err(parse_err(
            last_line(main),
            1,
            format!("need at least 2 data rows, found {n}"),
        ));
    }
    let cols = main.rows[0].len();
    let (m, yv) = match y {
        None => {
            if cols < 2 {
                return Err(parse_err(
                    main.lines[0],
                    1,
                    "need at least one feature column and a y column",
                ));
            }
            (cols - 1, RVector::from_fn(n, |r, _| main.rows[r][cols - 1]))
        }
        Some(yt) => {
            if let Some((r, row)) = yt.rows.iter().enumerate().find(|(_, row)| row.len() != 1) {
                return Err(parse_err(
                    yt.lines[r],
                    2,
                    format!("y file must have one column, found {}", row.len()),
                ));
            }
            if yt.rows.len() != n {
                return Err(parse_err(
                    last_line(yt),
                    1,
                    format!("y file has {} rows, the design has {n}", yt.rows.len()),
                ));
            }
            (cols, RVector::from_fn(n, |r, _| yt.rows[r][0]))
        }
    };
    let x = RMatrix::from_fn(n, m, |r, c| main.rows[r][c]);
    Dataset::new(x, yv)
}

pub fn ingest_csv(path: &Path, y_path: Option<&Path>) -> Result<Dataset> {
    let main = read_table(path)?;
    let y = y_path.map(read_table).transpose()?;
    dataset_from_tables(&main, y.as_ref())
}

/// `X | y` as CSV text, optionally with an `x1,...,xM,y` header.
pub fn dataset_to_csv(d: &Dataset, header: bool) -> String {
    let mut out = String::new();
    if header {
        let names: Vec<String> = (1..=d.m())
            .map(|j| format!("x{j}"))
            .chain(["y".to_string()])
            .collect();
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for r in 0..d.n() {
        let cells: Vec<String> = d
            .x()
            .row(r)
            .iter()
            .chain([d.y()[r]].iter())
            .map(|v| v.to_string())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place, creating missing parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn export_csv(d: &Dataset, path: &Path, header: bool) -> Result<()> {
    write_atomic(path, dataset_to_csv(d, header).as_bytes())
}
