//! OLXT dense tensors.
//!
//! Layout, all little-endian: magic `OLXT`, version `u8 = 1`, dtype
//! `u8 = 0` (f32), rank `u8`, `rank` dimensions as `u64`, then the row-major
//! f32 payload. Matrices have rank 2.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::similarity::FeatureMatrix;

pub const MAGIC: &[u8; 4] = b"OLXT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

pub fn encode_matrix(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(23 + m.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_F32, 2]);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix> {
    let bad = |m: String| Error::format(path, m);
    if bytes.len() < 7 || &bytes[..4] != MAGIC {
        return Err(bad("not an OLXT tensor".into()));
    }
    let (version, dtype, rank) = (bytes[4], bytes[5], bytes[6] as usize);
    if version != VERSION {
        return Err(bad(format!("unsupported OLXT version {version}")));
    }
    if dtype != DTYPE_F32 {
        return Err(bad(format!("unsupported dtype {dtype}")));
    }
    if rank != 2 {
        return Err(bad(format!("expected a rank-2 tensor, found rank {rank}")));
    }
    let header = 7 + 8 * rank;
    if bytes.len() < header {
        return Err(bad("truncated header".into()));
    }
    let dim_at = |k: usize| u64::from_le_bytes(bytes[7 + 8 * k..15 + 8 * k].try_into().unwrap());
    let (rows, cols) = (dim_at(0), dim_at(1));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| bad(format!("tensor shape {rows}x{cols} overflows")))?;
    if bytes.len() - header != count {
        return Err(bad(format!(
            "payload holds {} bytes, shape {rows}x{cols} needs {count}",
            bytes.len() - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(rows as usize, cols as usize, data).map_err(|e| bad(e.to_string()))
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(path, &bytes)
}

pub fn write_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let m = FeatureMatrix::from_rows(2, &[vec![1.0, -2.5]]).unwrap();
        let b = encode_matrix(&m);
        assert_eq!(&b[..7], b"OLXT\x01\x00\x02");
        assert_eq!(&b[7..15], &1u64.to_le_bytes());
        assert_eq!(&b[15..23], &2u64.to_le_bytes());
        assert_eq!(&b[23..27], &[0x00, 0x00, 0x80, 0x3f]);
        assert_eq!(decode_matrix(Path::new("x"), &b).unwrap(), m);
    }

    #[test]
    fn rejects_bad_input() {
        let m = FeatureMatrix::from_rows(2, &[vec![1.0, 2.0]]).unwrap();
        let mut b = encode_matrix(&m);
        b.pop();
        assert!(decode_matrix(Path::new("x"), &b).is_err());
        let mut b = encode_matrix(&m);
        b[5] = 1;
        assert!(decode_matrix(Path::new("x"), &b).is_err());
        assert!(decode_matrix(Path::new("x"), b"PLY!").is_err());
    }
}
