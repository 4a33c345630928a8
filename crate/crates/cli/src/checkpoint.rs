//! Parameter checkpoint file format.
//!
//! Little-endian binary layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "AXCK"
//! 4       2     format version (currently 1)
//! 6       2     reserved, zero
//! 8       8     parameter count P (u64)
//! 16      8*P   parameter payload (f64, little-endian)
//! 16+8*P  4     CRC32 of bytes [0, 16+8*P)
//! ```
//!
//! Round-trips are bit-exact for every f64 value, including negative zero
//! and subnormals; the trailing CRC detects any single-bit flip.

use std::fs;
use std::path::Path;

use auxcal_core::ParamVector;

use crate::error::CliError;

const MAGIC: &[u8; 4] = b"AXCK";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

pub fn save_checkpoint(theta: &ParamVector, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * theta.len() + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for &v in theta.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    }
    fs::write(path, buf).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamVector, CliError> {
    let display = path.display().to_string();
    let buf = fs::read(path).map_err(|e| CliError::io(display.clone(), e))?;
    let corrupt = |what: &str| CliError::Corrupt { path: display.clone(), what: what.into() };
    if buf.len() < HEADER_LEN + 4 {
        return Err(corrupt("truncated header"));
    }
    if &buf[0..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let count = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 8 * count + 4;
    if buf.len() != expected {
        return Err(corrupt("truncated or oversized payload"));
    }
    let stored_crc = u32::from_le_bytes(buf[expected - 4..].try_into().unwrap());
    let actual_crc = crc32fast::hash(&buf[..expected - 4]);
    if stored_crc != actual_crc {
        return Err(corrupt("checksum mismatch"));
    }
    let values = buf[HEADER_LEN..expected - 4]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ParamVector::from_vec(values))
}
