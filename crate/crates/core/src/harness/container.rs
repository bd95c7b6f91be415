//! Binary matrix files: `"GKMX"`, version `u16`, rows `u32`, cols `u32`,
//! row-major little-endian `f64` payload, then the CRC32 of the payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"GKMX";
pub const FORMAT_VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 4 + 4;

pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * m.as_slice().len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[HEADER..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parses a container; `file` only labels errors.
pub fn decode_matrix(bytes: &[u8], file: &Path) -> Result<Matrix> {
    let err = |msg: String| Error::Checkpoint {
        file: file.to_path_buf(),
        msg,
    };
    if bytes.len() < HEADER + 4 {
        return Err(err(format!("truncated: {} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(err(format!("bad magic bytes {:?}, expected \"GKMX\"", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(err(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let rows = word(6) as usize;
    let cols = word(10) as usize;
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| err(format!("shape {rows}x{cols} overflows")))?;
    if bytes.len() != HEADER + payload + 4 {
        return Err(err(format!(
            "truncated or oversized: {rows}x{cols} needs {} bytes, file has {}",
            HEADER + payload + 4,
            bytes.len()
        )));
    }
    let data = &bytes[HEADER..HEADER + payload];
    let stored = word(HEADER + payload);
    let actual = crc32fast::hash(data);
    if stored != actual {
        return Err(err(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(rows, cols, values).map_err(|e| err(e.to_string()))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}
