//! Binary field files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! 0..16   magic  b"PESKIN-FIELD-F64"
//! 16..20  u32    format version
//! 20..24  u32    number of components (1 or 2)
//! 24..32  u64    grid size N
//! 32..    f64    component 0 values, then component 1
//! ```

use std::fs;
use std::path::Path;

use peskin_core::spectral::PeriodicField;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 16] = b"PESKIN-FIELD-F64";
pub const VERSION: u32 = 1;
const HEADER: usize = 32;

pub fn encode_field(field: &PeriodicField) -> Vec<u8> {
    let n = field.grid_size();
    let mut out = Vec::with_capacity(HEADER + 8 * n * field.dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(field.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for c in field.components() {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_field(bytes: &[u8], path: &Path) -> Result<PeriodicField> {
    let fail = |detail: String| HarnessError::Format {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < HEADER {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..16] != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported format version {version} (expected {VERSION})")));
    }
    let dim = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    if !(1..=2).contains(&dim) {
        return Err(fail(format!("unsupported component count {dim}")));
    }
    let expected = n
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER))
        .ok_or_else(|| fail("size overflow".into()))?;
    if bytes.len() != expected {
        return Err(fail(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut comps: Vec<Vec<f64>> = bytes[HEADER..]
        .chunks_exact(8 * n.max(1))
        .map(|c| c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
        .collect();
    let field = if dim == 1 {
        PeriodicField::scalar(comps.remove(0))
    } else {
        let y = comps.remove(1);
        PeriodicField::vector(comps.remove(0), y)
    };
    field.map_err(|e| fail(e.to_string()))
}

pub fn save_field(path: &Path, field: &PeriodicField) -> Result<()> {
    fs::write(path, encode_field(field)).map_err(|e| HarnessError::io(path, e))
}

pub fn load_field(path: &Path) -> Result<PeriodicField> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode_field(&bytes, path)
}
