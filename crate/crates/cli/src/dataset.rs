//! Dataset persistence: one binary matrix file per split plus a JSON
//! sidecar describing how it was generated.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! offset            size   field
//! 0                 4      magic "AXDS"
//! 4                 2      format version (currently 1)
//! 6                 2      reserved, zero
//! 8                 8      rows N (u64)
//! 16                8      cols D (u64)
//! 24                8*N*D  clean payload, row-major f64
//! ..                8*N*D  noisy payload, row-major f64
//! ..                8*N    labels (u64 each)
//! ..                8*N    per-row mixed SNR in dB (f64 each)
//! end-4             4      CRC32 of all preceding bytes
//! ```
//!
//! The sidecar `<name>.json` carries the generating [`TaskSpec`], the rng
//! seed of the split, and the split size.

use std::fs;
use std::path::Path;

use auxcal_core::task::{TaskData, TaskSpec};
use auxcal_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const MAGIC: &[u8; 4] = b"AXDS";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub task: TaskSpec,
    pub split_seed: u64,
    pub rows: usize,
}

pub fn save_dataset(
    data: &TaskData,
    sidecar: &DatasetSidecar,
    path: &Path,
) -> Result<(), CliError> {
    let n = data.len();
    let d = data.clean.ncols();
    let mut buf = Vec::with_capacity(24 + 8 * (2 * n * d + 2 * n) + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u64).to_le_bytes());
    for &v in data.clean.as_flat() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in data.noisy.as_flat() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &l in &data.labels {
        buf.extend_from_slice(&(l as u64).to_le_bytes());
    }
    for &s in &data.snr_db {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    }
    fs::write(path, buf).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| CliError::Config(format!("sidecar serialization: {e}")))?;
    let sidecar_path = path.with_extension("json");
    fs::write(&sidecar_path, json)
        .map_err(|e| CliError::io(sidecar_path.display().to_string(), e))
}

pub fn load_dataset(path: &Path) -> Result<(TaskData, DatasetSidecar), CliError> {
    let display = path.display().to_string();
    let buf = fs::read(path).map_err(|e| CliError::io(display.clone(), e))?;
    let corrupt = |what: &str| CliError::Corrupt { path: display.clone(), what: what.into() };
    if buf.len() < 28 || &buf[0..4] != MAGIC {
        return Err(corrupt("bad magic or truncated header"));
    }
    if u16::from_le_bytes([buf[4], buf[5]]) != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(buf[16..24].try_into().unwrap()) as usize;
    let expected = 24 + 8 * (2 * n * d + 2 * n) + 4;
    if buf.len() != expected {
        return Err(corrupt("truncated or oversized payload"));
    }
    let stored_crc = u32::from_le_bytes(buf[expected - 4..].try_into().unwrap());
    if stored_crc != crc32fast::hash(&buf[..expected - 4]) {
        return Err(corrupt("checksum mismatch"));
    }
    let mut off = 24;
    let read_f64s = |count: usize, off: &mut usize| -> Vec<f64> {
        let out = buf[*off..*off + 8 * count]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *off += 8 * count;
        out
    };
    let clean = Matrix::from_flat(n, d, read_f64s(n * d, &mut off)).map_err(CliError::Core)?;
    let noisy = Matrix::from_flat(n, d, read_f64s(n * d, &mut off)).map_err(CliError::Core)?;
    let labels: Vec<usize> = buf[off..off + 8 * n]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    off += 8 * n;
    let snr_db = read_f64s(n, &mut off);
    let sidecar_path = path.with_extension("json");
    let sidecar_text = fs::read_to_string(&sidecar_path)
        .map_err(|e| CliError::io(sidecar_path.display().to_string(), e))?;
    let sidecar: DatasetSidecar = serde_json::from_str(&sidecar_text).map_err(|e| {
        CliError::Corrupt {
            path: sidecar_path.display().to_string(),
            what: format!("sidecar parse: {e}"),
        }
    })?;
    Ok((TaskData { clean, noisy, labels, snr_db }, sidecar))
}
