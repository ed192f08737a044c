//! Binary dense-matrix files.
//!
//! Layout: the magic bytes `PRMF`, a little-endian `u32` format version,
//! `u64` rows and `u64` cols, then `rows * cols` little-endian binary64
//! values in column-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PRMF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    let fail = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| fail("dimension overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 8 * count {
        return Err(fail(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            8 * count,
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_vec(rows, cols, data))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, &encode_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    decode_matrix(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.0, f64::MIN_POSITIVE, 1e300, 0.1, -7.5]);
        let bytes = encode_matrix(&m);
        assert_eq!(&bytes[..4], b"PRMF");
        let back = decode_matrix(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.shape(), (2, 3));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn column_major_payload() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = encode_matrix(&m);
        let second = f64::from_le_bytes(bytes[HEADER_LEN + 8..HEADER_LEN + 16].try_into().unwrap());
        assert_eq!(second, 3.0);
    }

    #[test]
    fn rejects_magic_version_and_truncation() {
        let mut bytes = encode_matrix(&DMatrix::identity(2, 2));
        let p = Path::new("x.prmf");
        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(matches!(decode_matrix(&bad, p), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_matrix(&bad, p), Err(Error::Format { .. })));
        bytes.pop();
        assert!(matches!(decode_matrix(&bytes, p), Err(Error::Format { .. })));
    }

    #[test]
    fn empty_matrix_round_trips() {
        let m = DMatrix::<f64>::zeros(5, 0);
        let back = decode_matrix(&encode_matrix(&m), Path::new("e")).unwrap();
        assert_eq!(back.shape(), (5, 0));
    }
}
