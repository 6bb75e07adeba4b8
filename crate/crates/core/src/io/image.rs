//! PGM/PPM writers.
//!
//! Grayscale output is binary 16-bit PGM (`P5`, maxval 65535, big-endian
//! samples, row 0 at the top). A value `v` in display range `[lo, hi]` maps
//! to `round(65535 * (v - lo) / (hi - lo))`, clamped to `[0, 65535]`, with
//! halves rounded away from zero. A degenerate range (`hi <= lo`) maps every
//! sample to 32768.
//!
//! Colour output is binary 8-bit PPM (`P6`) through a diverging map that is
//! linear from blue (59, 76, 192) at `lo` through white at the midpoint to
//! red (180, 4, 38) at `hi`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ScalarField;

/// Display range for rendering.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Range {
    /// Min to max of the data.
    #[default]
    Auto,
    Explicit(f64, f64),
}

impl Range {
    pub fn resolve(&self, f: &ScalarField<f64>) -> (f64, f64) {
        match *self {
            Range::Explicit(lo, hi) => (lo, hi),
            Range::Auto => f
                .values()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        }
    }
}

impl std::str::FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Range::Auto);
        }
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("range must be `auto` or `lo,hi`, got {s:?}"))?;
        let lo: f64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad range bound {a:?}"))?;
        let hi: f64 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad range bound {b:?}"))?;
        if !lo.is_finite() || !hi.is_finite() {
            return Err("range bounds must be finite".into());
        }
        Ok(Range::Explicit(lo, hi))
    }
}

/// Normalized position in `[0, 1]`, or `None` for a degenerate range.
fn unit(v: f64, lo: f64, hi: f64) -> Option<f64> {
    if !(hi > lo) {
        return None;
    }
    Some(((v - lo) / (hi - lo)).clamp(0.0, 1.0))
}

pub fn gray16_level(v: f64, lo: f64, hi: f64) -> u16 {
    match unit(v, lo, hi) {
        None => 32768,
        Some(t) => (t * 65535.0).round() as u16,
    }
}

const COLD: [f64; 3] = [59.0, 76.0, 192.0];
const WARM: [f64; 3] = [180.0, 4.0, 38.0];

pub fn diverging_rgb(v: f64, lo: f64, hi: f64) -> [u8; 3] {
    let t = unit(v, lo, hi).unwrap_or(0.5);
    let (end, s) = if t < 0.5 {
        (COLD, 1.0 - 2.0 * t)
    } else {
        (WARM, 2.0 * t - 1.0)
    };
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (255.0 + (end[c] - 255.0) * s).round() as u8;
    }
    out
}

pub fn encode_pgm16(f: &ScalarField<f64>, range: Range) -> Vec<u8> {
    let (lo, hi) = range.resolve(f);
    let g = f.grid();
    let mut out = format!("P5\n{} {}\n65535\n", g.cols(), g.rows()).into_bytes();
    out.reserve(2 * g.len());
    for &v in f.values() {
        out.extend_from_slice(&gray16_level(v, lo, hi).to_be_bytes());
    }
    out
}

pub fn encode_ppm(f: &ScalarField<f64>, range: Range) -> Vec<u8> {
    let (lo, hi) = range.resolve(f);
    let g = f.grid();
    let mut out = format!("P6\n{} {}\n255\n", g.cols(), g.rows()).into_bytes();
    out.reserve(3 * g.len());
    for &v in f.values() {
        out.extend_from_slice(&diverging_rgb(v, lo, hi));
    }
    out
}

/// Writes PGM or PPM depending on the extension (`.ppm` for colour,
/// anything else for 16-bit gray).
pub fn write_image(path: &Path, f: &ScalarField<f64>, range: Range) -> Result<()> {
    let colour = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let bytes = if colour {
        encode_ppm(f, range)
    } else {
        encode_pgm16(f, range)
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
