//! Headered long-form CSV for fields.
//!
//! Scalar fields: `row,col,value`. Gradient fields: `row,col,psi_x,psi_y`.
//! Every cell of the `(max row + 1) x (max col + 1)` grid must appear once;
//! rows may come in any order. CSV carries no spacing, so grids read back
//! with unit spacing.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GradientField, Grid, ScalarField};
use crate::io::field_file::FieldFile;

pub const SCALAR_HEADER: [&str; 3] = ["row", "col", "value"];
pub const GRADIENT_HEADER: [&str; 4] = ["row", "col", "psi_x", "psi_y"];

pub fn write_csv(path: &Path, file: &FieldFile) -> Result<()> {
    let io = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    match file {
        FieldFile::Scalar(f) => {
            w.write_record(SCALAR_HEADER).map_err(io)?;
            let n = f.grid().cols();
            for (k, v) in f.values().iter().enumerate() {
                w.write_record([(k / n).to_string(), (k % n).to_string(), format!("{v:e}")])
                    .map_err(io)?;
            }
        }
        FieldFile::Gradient(g) => {
            w.write_record(GRADIENT_HEADER).map_err(io)?;
            let n = g.grid().cols();
            for (k, (x, y)) in g
                .psi_x()
                .values()
                .iter()
                .zip(g.psi_y().values())
                .enumerate()
            {
                w.write_record([
                    (k / n).to_string(),
                    (k % n).to_string(),
                    format!("{x:e}"),
                    format!("{y:e}"),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<FieldFile> {
    let bad = |reason: String| Error::format(path, reason);
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let width = if headers == SCALAR_HEADER {
        1
    } else if headers == GRADIENT_HEADER {
        2
    } else {
        return Err(bad(format!(
            "header must be {:?} or {:?}, found {headers:?}",
            SCALAR_HEADER, GRADIENT_HEADER
        )));
    };

    let mut cells: Vec<(usize, usize, [f64; 2])> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 + width {
            return Err(bad(format!(
                "record {}: expected {} fields",
                line + 1,
                2 + width
            )));
        }
        let idx = |c: usize| -> Result<usize> {
            rec[c]
                .trim()
                .parse()
                .map_err(|_| bad(format!("record {}: bad index {:?}", line + 1, &rec[c])))
        };
        let val = |c: usize| -> Result<f64> {
            let v: f64 = rec[c]
                .trim()
                .parse()
                .map_err(|_| bad(format!("record {}: bad number {:?}", line + 1, &rec[c])))?;
            if !v.is_finite() {
                return Err(bad(format!("record {}: non-finite value", line + 1)));
            }
            Ok(v)
        };
        let mut v = [0.0; 2];
        for (a, slot) in v.iter_mut().enumerate().take(width) {
            *slot = val(2 + a)?;
        }
        cells.push((idx(0)?, idx(1)?, v));
    }
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let grid = Grid::new(rows, cols).map_err(|e| bad(e.to_string()))?;
    if cells.len() != grid.len() {
        return Err(bad(format!(
            "{} records for a {rows}x{cols} grid",
            cells.len()
        )));
    }
    let mut seen = vec![false; grid.len()];
    let mut a = vec![0.0; grid.len()];
    let mut b = vec![0.0; grid.len()];
    for (i, j, v) in cells {
        let k = grid.index(i, j);
        if std::mem::replace(&mut seen[k], true) {
            return Err(bad(format!("cell ({i}, {j}) listed twice")));
        }
        a[k] = v[0];
        b[k] = v[1];
    }
    let first = ScalarField::from_vec(grid, a)?;
    Ok(if width == 1 {
        FieldFile::Scalar(first)
    } else {
        FieldFile::Gradient(GradientField::new(first, ScalarField::from_vec(grid, b)?)?)
    })
}
