//! Binary matrix container: bit-exact persistence for recovered dictionaries,
//! projection matrices and feature spaces.
//!
//! Layout: 8-byte magic, `u64` row count, `u64` column count (both
//! little-endian), then column-major `f64` entries, little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::DataError;

pub const MATRIX_MAGIC: [u8; 8] = *b"DLRRMAT1";

pub fn write_matrix_to(mut w: impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_all(&MATRIX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    // nalgebra stores column-major, so the slice is already in layout order
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix_from(mut r: impl Read) -> Result<DMatrix<f64>, DataError> {
    let container = |message: &str| DataError::Container {
        message: message.to_string(),
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| container("truncated header"))?;
    if magic != MATRIX_MAGIC {
        return Err(container("bad magic"));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)
        .map_err(|_| container("truncated header"))?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)
        .map_err(|_| container("truncated header"))?;
    let cols = u64::from_le_bytes(word) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| container("dimension overflow"))?;
    let mut entries = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| container("truncated payload"))?;
        let v = f64::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(container("non-finite entry"));
        }
        entries.push(v);
    }
    Ok(DMatrix::from_column_slice(rows, cols, &entries))
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    write_matrix_to(&mut w, m).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.flush().map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>, DataError> {
    let file = File::open(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_matrix_from(BufReader::new(file))
}
