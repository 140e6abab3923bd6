//! Reading and writing numeric CSV matrices.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Reads an n × M numeric CSV file. With `header`, the first row is skipped.
pub fn read_matrix_csv(path: &Path, header: bool) -> Result<Matrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(file, header, &path.display().to_string())
}

/// As [`read_matrix_csv`] for any reader; `name` labels parse errors.
pub fn read_matrix<R: std::io::Read>(reader: R, header: bool, name: &str) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: name.to_string(),
        row,
        column,
        message,
    };
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1 + usize::from(header);
        let rec = rec.map_err(|e| parse_err(row, 0, e.to_string()))?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(parse_err(row, 0, format!("expected {c} fields, found {}", rec.len())))
            }
            _ => {}
        }
        for (j, field) in rec.iter().enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| parse_err(row, j + 1, format!("'{field}' is not a number")))?;
            if !x.is_finite() {
                return Err(parse_err(row, j + 1, format!("'{field}' is not finite")));
            }
            data.push(x);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(1, 0, "no data rows".into()))?;
    Matrix::new(rows, cols, data)
}

/// Writes `m` as CSV with an optional header row.
pub fn write_matrix_csv(path: &Path, m: &Matrix, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_to_io(path, e))?;
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_to_io(path, e))?;
    }
    for row in m.row_iter() {
        w.write_record(row.iter().map(|x| format!("{x}")))
            .map_err(|e| csv_to_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_to_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}
