//! Matrix and report file I/O.
//!
//! Matrices travel as headerless CSV, row-major, one row per line, reals
//! written with 17 significant digits so a write-read round trip is
//! bit-identical. Reports are JSON documents.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};

fn io_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Io { path: path.display().to_string(), message: message.into() }
}

fn require_extension(path: &Path, ext: &str) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case(ext) => Ok(()),
        other => Err(io_err(
            path,
            format!("expected a .{ext} file, got extension {other:?}"),
        )),
    }
}

/// Read a headerless CSV matrix. Ragged rows or unparsable cells produce a
/// DataError naming the offending row and column.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    require_extension(path, "csv")?;
    let file = File::open(path).map_err(|e| io_err(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}, column {}: cannot parse `{}` as a real",
                    path.display(),
                    r + 1,
                    c + 1,
                    cell.trim()
                ))
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Data(format!(
                    "{}: row {} has {} columns, expected {}",
                    path.display(),
                    r + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: empty matrix file", path.display())));
    }
    let ncols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = flat.len() / ncols;
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Read an n×1 or 1×n CSV as a vector.
pub fn read_vector(path: &Path) -> Result<Array1<f64>> {
    let m = read_matrix(path)?;
    let (r, c) = m.dim();
    if r != 1 && c != 1 {
        return Err(Error::Data(format!(
            "{}: expected a vector, got a {r}x{c} matrix",
            path.display()
        )));
    }
    Ok(Array1::from_iter(m.iter().cloned()))
}

/// Write a matrix as headerless CSV with 17 significant digits.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    require_extension(path, "csv")?;
    let file = File::create(path).map_err(|e| io_err(path, e.to_string()))?;
    let mut w = BufWriter::new(file);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_real(m[[i, j]])).collect();
        writeln!(w, "{}", row.join(",")).map_err(|e| io_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e.to_string()))
}

pub fn write_vector(path: &Path, v: &Array1<f64>) -> Result<()> {
    let m = Array2::from_shape_fn((v.len(), 1), |(i, _)| v[i]);
    write_matrix(path, &m)
}

/// 17 significant digits: enough to reconstruct any f64 exactly.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialize a report as pretty JSON.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    require_extension(path, "json")?;
    let file = File::create(path).map_err(|e| io_err(path, e.to_string()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(|e| io_err(path, e.to_string()))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e.to_string()))?;
    w.flush().map_err(|e| io_err(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn matrix_roundtrip_is_bit_identical() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let dir = std::env::temp_dir().join("briot_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let m = Array2::from_shape_fn((7, 5), |_| rng.random_range(-1.0e3..1.0e3_f64) / 7.0);
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn extension_checked() {
        let dir = std::env::temp_dir();
        assert!(matches!(
            write_matrix(&dir.join("m.txt"), &arr2(&[[1.0]])),
            Err(Error::Io { .. })
        ));
        assert!(matches!(read_matrix(&dir.join("missing.dat")), Err(Error::Io { .. })));
    }

    #[test]
    fn ragged_and_bad_cells_are_data_errors() {
        let dir = std::env::temp_dir().join("briot_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.csv");
        std::fs::write(&p, "1.0,2.0\n3.0\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Data(_))));
        std::fs::write(&p, "1.0,zebra\n").unwrap();
        let err = read_matrix(&p).unwrap_err();
        assert!(err.to_string().contains("column 2"));
    }
}
