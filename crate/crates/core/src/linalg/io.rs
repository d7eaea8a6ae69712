//! Matrix file formats.
//!
//! Binary: the 4-byte magic `SYMM`, a little-endian `u32` format version,
//! a little-endian `u64` dimension `p`, then `p * p` little-endian `f64`
//! entries in column-major order.
//!
//! CSV: one line per matrix row, comma separated, no header. Values are
//! written with Rust's shortest round-trip formatting.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use super::SymMatrix;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"SYMM";
pub const BINARY_VERSION: u32 = 1;

pub fn write_sym_binary<W: Write>(m: &SymMatrix, mut out: W) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&(m.dim() as u64).to_le_bytes())?;
    for v in m.as_matrix().iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sym_binary<R: Read>(mut input: R) -> Result<SymMatrix> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Shape("not a SYMM matrix file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != BINARY_VERSION {
        return Err(Error::Shape(format!("unsupported SYMM version {version}")));
    }
    let mut dword = [0u8; 8];
    input.read_exact(&mut dword)?;
    let p = usize::try_from(u64::from_le_bytes(dword))
        .map_err(|_| Error::Shape("dimension overflows usize".into()))?;
    let len = p
        .checked_mul(p)
        .ok_or_else(|| Error::Shape("dimension overflows usize".into()))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        input.read_exact(&mut dword)?;
        data.push(f64::from_le_bytes(dword));
    }
    SymMatrix::new(DMatrix::from_vec(p, p, data))
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a rectangular CSV matrix. Blank lines are skipped.
pub fn read_matrix_csv<R: BufRead>(input: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::Shape(format!("line {}: cannot parse {s:?}: {e}", lineno + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Shape(format!(
                    "line {} has {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
