//! `EMBSTOR1` dense matrix files.
//!
//! Layout: the 8-byte magic `EMBSTOR1`, a little-endian `u32` row count, a
//! little-endian `u32` column count, then `rows * cols` little-endian `f32`
//! values in row-major order. Nothing follows the payload.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{write_io, Error, Result};

pub const MAGIC: &[u8; 8] = b"EMBSTOR1";
const HEADER_LEN: usize = 16;

pub fn encode(matrix: &Array2<f32>) -> Vec<u8> {
    let (rows, cols) = matrix.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    // iterates in logical (row-major) order regardless of memory layout
    for v in matrix.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let bad = |reason: String| Error::InvalidFormat {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!(
            "file is {} bytes, shorter than header",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("bad magic, expected EMBSTOR1".into()));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("row/column count overflows".into()))?;
    if payload.len() != expected {
        return Err(bad(format!(
            "payload is {} bytes, header declares {rows}x{cols} ({expected} bytes)",
            payload.len()
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked above"))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::read_io(path, e))?;
    decode(&bytes, path)
}

pub fn write_matrix(path: &Path, matrix: &Array2<f32>) -> Result<()> {
    fs::write(path, encode(matrix)).map_err(|e| write_io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn header_layout_is_exact() {
        let m = array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let bytes = encode(&m);
        assert_eq!(&bytes[..8], b"EMBSTOR1");
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[36..40], &6.0f32.to_le_bytes());
    }

    #[test]
    fn transposed_view_is_written_row_major() {
        let m = array![[1.0f32, 2.0], [3.0, 4.0]];
        let t = m.t().to_owned();
        let back = decode(&encode(&t), Path::new("t")).unwrap();
        assert_eq!(back, array![[1.0f32, 3.0], [2.0, 4.0]]);
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = encode(&array![[1.0f32, 2.0]]);
        bytes.pop();
        let err = decode(&bytes, Path::new("x")).unwrap_err();
        assert_eq!(err.kind(), "InvalidFormat");
    }

    #[test]
    fn rejects_trailing_bytes_and_bad_magic() {
        let mut bytes = encode(&array![[1.0f32]]);
        bytes.push(0);
        assert!(decode(&bytes, Path::new("x")).is_err());
        let mut bytes = encode(&array![[1.0f32]]);
        bytes[0] = b'X';
        assert!(decode(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn missing_file_maps_to_missing_file() {
        let err = read_matrix(Path::new("/definitely/not/here.bin")).unwrap_err();
        assert_eq!(err.kind(), "MissingFile");
    }
}
