//! The NMR2D-v1 grid file.
//!
//! Layout: one line of UTF-8 JSON terminated by `\n`,
//!
//! ```text
//! {"magic":"NMR2D-v1","n_indirect":<int>,"n_direct":<int>,"domain":"TT"|"TF"|"FF","endian":"LE"}
//! ```
//!
//! followed by `n_indirect * n_direct` little-endian `f32` pairs
//! `(real, imag)`, row-major with the indirect axis outermost. Values are
//! stored at `f32` precision, so `read(write(g))` reproduces `g` exactly
//! only when `g` is already `f32`-representable (see
//! [`ComplexGrid::quantize_f32`]).

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Domain};

pub const MAGIC: &str = "NMR2D-v1";
const MAGIC_FAMILY: &str = "NMR2D-";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    n_indirect: usize,
    n_direct: usize,
    domain: Domain,
    endian: String,
}

pub fn encode_grid(grid: &ComplexGrid) -> Result<Vec<u8>> {
    if !grid.is_finite() {
        return Err(Error::Numerical("refusing to write non-finite grid".into()));
    }
    let header = Header {
        magic: MAGIC.to_string(),
        n_indirect: grid.n_indirect(),
        n_direct: grid.n_direct(),
        domain: grid.domain(),
        endian: "LE".to_string(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(grid.len() * 8);
    for z in grid.data() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8]) -> Result<ComplexGrid> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(0, "missing header terminator"))?;
    let header_text = std::str::from_utf8(&bytes[..newline])
        .map_err(|e| Error::format(e.valid_up_to() as u64, "header is not UTF-8"))?;
    let value: serde_json::Value = serde_json::from_str(header_text)
        .map_err(|e| Error::format(e.column().saturating_sub(1) as u64, format!("bad header JSON: {e}")))?;

    let magic = value.get("magic").and_then(|m| m.as_str()).unwrap_or("");
    if magic != MAGIC {
        let message = if magic.starts_with(MAGIC_FAMILY) {
            format!("unsupported format version '{magic}'")
        } else {
            format!("bad magic '{magic}'")
        };
        return Err(Error::format(0, message));
    }
    let header: Header = serde_json::from_value(value)
        .map_err(|e| Error::format(0, format!("bad header fields: {e}")))?;
    if header.endian != "LE" {
        return Err(Error::format(0, format!("unsupported endianness '{}'", header.endian)));
    }
    if header.n_indirect == 0 || header.n_direct == 0 {
        return Err(Error::format(0, "grid dimensions must be positive"));
    }

    let payload_start = newline + 1;
    let payload = &bytes[payload_start..];
    let count = header
        .n_indirect
        .checked_mul(header.n_direct)
        .ok_or_else(|| Error::format(0, "grid dimensions overflow"))?;
    let expected = (count as u64) * 8;
    let actual = payload.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::format(
            payload_start as u64 + expected,
            format!("{} trailing bytes after payload", actual - expected),
        ));
    }

    let mut data = Vec::with_capacity(count);
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::format(
                (payload_start + k * 8) as u64,
                "non-finite value in payload",
            ));
        }
        data.push(Complex64::new(re as f64, im as f64));
    }
    ComplexGrid::from_vec(header.n_indirect, header.n_direct, data, header.domain)
}

pub fn write_grid(grid: &ComplexGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_grid(grid)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<ComplexGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}
