//! Point file formats: binary (header + little-endian f64 rows) and strict
//! CSV. The same layout carries both datasets and embedding outputs.

use crate::geom::PointSet;
use std::io::{self, Read, Write};
use thiserror::Error;

pub const POINTS_MAGIC: &[u8; 4] = b"TPTS";
pub const POINTS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("non-finite coordinate in row {0}")]
    NonFinite(usize),
    #[error("csv parse error at line {line}: {what}")]
    Csv { line: usize, what: String },
    #[error("empty input")]
    Empty,
    #[error("inconsistent row length at line {0}")]
    Ragged(usize),
}

pub(crate) fn read_exact_buf<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, DataIoError> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            DataIoError::Truncated
        } else {
            DataIoError::Io(e)
        }
    })?;
    Ok(buf)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32, DataIoError> {
    Ok(u32::from_le_bytes(read_exact_buf(r, 4)?.try_into().unwrap()))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64, DataIoError> {
    Ok(u64::from_le_bytes(read_exact_buf(r, 8)?.try_into().unwrap()))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64, DataIoError> {
    Ok(f64::from_le_bytes(read_exact_buf(r, 8)?.try_into().unwrap()))
}

/// Writes rows in the binary format: magic, version, n, d, then n·d f64 LE.
pub fn write_points<W: Write>(w: &mut W, data: &[f64], n: usize, d: usize) -> Result<(), DataIoError> {
    assert_eq!(data.len(), n * d);
    w.write_all(POINTS_MAGIC)?;
    w.write_all(&POINTS_VERSION.to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(d as u64).to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_point_set<W: Write>(w: &mut W, x: &PointSet) -> Result<(), DataIoError> {
    write_points(w, x.as_slice(), x.n(), x.d())
}

/// Reads the binary format. n = 0 yields an empty row list.
pub fn read_points<R: Read>(r: &mut R) -> Result<(Vec<f64>, usize, usize), DataIoError> {
    let magic = read_exact_buf(r, 4)?;
    if magic != POINTS_MAGIC {
        return Err(DataIoError::BadMagic { expected: String::from_utf8_lossy(POINTS_MAGIC).into() });
    }
    let version = read_u32(r)?;
    if version != POINTS_VERSION {
        return Err(DataIoError::BadVersion(version));
    }
    let n = read_u64(r)? as usize;
    let d = read_u64(r)? as usize;
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n * d {
        let v = read_f64(r)?;
        if !v.is_finite() {
            return Err(DataIoError::NonFinite(i / d.max(1)));
        }
        data.push(v);
    }
    Ok((data, n, d))
}

/// Strict CSV: one row per line, '.' decimal separator, ',' field separator,
/// no header, no locale forgiveness.
pub fn read_csv(text: &str) -> Result<(Vec<f64>, usize, usize), DataIoError> {
    let mut data = Vec::new();
    let mut d = None;
    let mut n = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>().map_err(|_| DataIoError::Csv {
                    line: lineno + 1,
                    what: format!("cannot parse {f:?} as a number"),
                })
            })
            .collect();
        let row = row?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(DataIoError::NonFinite(n));
        }
        match d {
            None => d = Some(row.len()),
            Some(dd) if dd != row.len() => return Err(DataIoError::Ragged(lineno + 1)),
            _ => {}
        }
        n += 1;
        data.extend(row);
    }
    let d = d.ok_or(DataIoError::Empty)?;
    Ok((data, n, d))
}

/// Reads a dataset from a path, choosing the format by extension
/// (`.csv` → CSV, anything else → binary).
pub fn read_points_path(path: &std::path::Path) -> Result<(Vec<f64>, usize, usize), DataIoError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = std::fs::read_to_string(path)?;
        read_csv(&text)
    } else {
        let mut f = std::fs::File::open(path)?;
        read_points(&mut io::BufReader::new(&mut f))
    }
}
