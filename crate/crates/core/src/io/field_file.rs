//! Binary field files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `LPW1`                             |
//! | 4      | 1    | kind: 1 = scalar field, 2 = gradient     |
//! | 5      | 4    | rows (u32)                               |
//! | 9      | 4    | cols (u32)                               |
//! | 13     | 8    | h_x (f64)                                |
//! | 21     | 8    | h_y (f64)                                |
//! | 29     | ...  | row-major f64 payload                    |
//!
//! A gradient file stores `psi_x` followed by `psi_y`. The payload length
//! must match exactly; trailing bytes are rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GradientField, Grid, ScalarField};

pub const MAGIC: &[u8; 4] = b"LPW1";
pub const HEADER_LEN: usize = 29;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum FieldKind {
    Scalar = 1,
    Gradient = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldFile {
    Scalar(ScalarField<f64>),
    Gradient(GradientField<f64>),
}

impl FieldFile {
    pub fn kind(&self) -> FieldKind {
        match self {
            FieldFile::Scalar(_) => FieldKind::Scalar,
            FieldFile::Gradient(_) => FieldKind::Gradient,
        }
    }

    pub fn grid(&self) -> &Grid<f64> {
        match self {
            FieldFile::Scalar(f) => f.grid(),
            FieldFile::Gradient(g) => g.grid(),
        }
    }
}

fn header(kind: FieldKind, grid: &Grid<f64>, payload_values: usize) -> Result<Vec<u8>> {
    let rows = u32::try_from(grid.rows())
        .map_err(|_| Error::InvalidGrid(format!("{} rows exceed u32", grid.rows())))?;
    let cols = u32::try_from(grid.cols())
        .map_err(|_| Error::InvalidGrid(format!("{} cols exceed u32", grid.cols())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * payload_values);
    out.extend_from_slice(MAGIC);
    out.push(kind as u8);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(&grid.h_x().to_le_bytes());
    out.extend_from_slice(&grid.h_y().to_le_bytes());
    Ok(out)
}

fn push_values(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_scalar(f: &ScalarField<f64>) -> Result<Vec<u8>> {
    let mut out = header(FieldKind::Scalar, f.grid(), f.values().len())?;
    push_values(&mut out, f.values());
    Ok(out)
}

pub fn encode_gradient(g: &GradientField<f64>) -> Result<Vec<u8>> {
    let mut out = header(FieldKind::Gradient, g.grid(), 2 * g.grid().len())?;
    push_values(&mut out, g.psi_x().values());
    push_values(&mut out, g.psi_y().values());
    Ok(out)
}

pub fn encode(file: &FieldFile) -> Result<Vec<u8>> {
    match file {
        FieldFile::Scalar(f) => encode_scalar(f),
        FieldFile::Gradient(g) => encode_gradient(g),
    }
}

/// Parses a complete file image. `origin` is only used in error messages.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<FieldFile> {
    let bad = |reason: String| Error::format(origin, reason);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[0..4])));
    }
    let kind = match bytes[4] {
        1 => FieldKind::Scalar,
        2 => FieldKind::Gradient,
        k => return Err(bad(format!("unknown kind {k}"))),
    };
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (rows, cols) = (u32_at(5), u32_at(9));
    let grid =
        Grid::with_spacing(rows, cols, f64_at(13), f64_at(21)).map_err(|e| bad(e.to_string()))?;
    let arrays = match kind {
        FieldKind::Scalar => 1,
        FieldKind::Gradient => 2,
    };
    let expected = grid
        .len()
        .checked_mul(8 * arrays)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| bad("payload size overflows".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "payload length mismatch: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    let read_array = |a: usize| -> Result<ScalarField<f64>> {
        let start = a * grid.len() * 8;
        let values = payload[start..start + grid.len() * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ScalarField::from_vec(grid, values).map_err(|e| bad(e.to_string()))
    };
    Ok(match kind {
        FieldKind::Scalar => FieldFile::Scalar(read_array(0)?),
        FieldKind::Gradient => {
            FieldFile::Gradient(GradientField::new(read_array(0)?, read_array(1)?)?)
        }
    })
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_field(path: &Path, file: &FieldFile) -> Result<()> {
    let bytes = encode(file)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
