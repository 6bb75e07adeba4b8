//! Weighted 5-point system `A phi = b`.
//!
//! Row `k = i * cols + j` of the system reads
//!
//! ```text
//! (U[i][j-1] + U[i][j] + V[i-1][j] + V[i][j]) phi[i][j]
//!   - U[i][j] phi[i][j+1] - U[i][j-1] phi[i][j-1]
//!   - V[i][j] phi[i+1][j] - V[i-1][j] phi[i-1][j]
//! = psi_x[i][j-1] U[i][j-1] - psi_x[i][j] U[i][j]
//!   + psi_y[i-1][j] V[i-1][j] - psi_y[i][j] V[i][j]
//! ```
//!
//! with out-of-range terms dropped. Together with the zero boundary weights
//! this gives a weighted graph Laplacian: symmetric, positive semidefinite,
//! zero row sums. Spacing is taken as 1; gradients must be in cell units.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{GradientField, Grid, ScalarField};
use crate::scalar::Real;
use crate::sparse::{CsrMatrix, CsrPattern};

/// 5-point pattern of a grid. Row entries are ordered
/// up, left, self, right, down (increasing column index).
pub fn stencil_pattern<T: Real>(grid: &Grid<T>) -> CsrPattern {
    let (m, n) = (grid.rows(), grid.cols());
    let mut row_ptr = Vec::with_capacity(grid.len() + 1);
    let mut col_idx = Vec::with_capacity(5 * grid.len());
    row_ptr.push(0);
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            if i > 0 {
                col_idx.push(k - n);
            }
            if j > 0 {
                col_idx.push(k - 1);
            }
            col_idx.push(k);
            if j + 1 < n {
                col_idx.push(k + 1);
            }
            if i + 1 < m {
                col_idx.push(k + n);
            }
            row_ptr.push(col_idx.len());
        }
    }
    CsrPattern::new(grid.len(), row_ptr, col_idx).expect("stencil pattern is well formed")
}

#[derive(Clone, Debug)]
pub struct SparseSystem<T> {
    grid: Grid<T>,
    matrix: CsrMatrix<T>,
    rhs: Vec<T>,
}

impl<T: Real> SparseSystem<T> {
    /// All-zero system on the stencil pattern of `grid`.
    pub fn zeros(grid: Grid<T>) -> Self {
        let pattern = Arc::new(stencil_pattern(&grid));
        Self {
            grid,
            matrix: CsrMatrix::zeros(pattern),
            rhs: vec![T::zero(); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    /// `A x`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.matrix.apply(x)
    }

    /// Rewrites values and right-hand side in place; the pattern is kept.
    pub fn assemble_into(
        &mut self,
        psi: &GradientField<T>,
        u: &ScalarField<T>,
        v: &ScalarField<T>,
    ) -> Result<()> {
        let grid = self.grid;
        grid.ensure_same(psi.grid(), "gradient")?;
        grid.ensure_same(u.grid(), "U weights")?;
        grid.ensure_same(v.grid(), "V weights")?;
        let (m, n) = (grid.rows(), grid.cols());
        let (uw, vw) = (u.values(), v.values());
        if let Some(k) = uw
            .iter()
            .chain(vw)
            .position(|w| !w.is_finite() || *w < T::zero())
        {
            return Err(Error::InvalidParameter(format!(
                "weights must be finite and nonnegative (entry {k})"
            )));
        }
        let (px, py) = (psi.psi_x().values(), psi.psi_y().values());

        let values = self.matrix.values_mut();
        let rhs = &mut self.rhs;
        let mut p = 0;
        for i in 0..m {
            for j in 0..n {
                let k = i * n + j;
                let mut diag = T::zero();
                let mut b = T::zero();
                // Entries are written in pattern order: up, left, self, right, down.
                if i > 0 {
                    let w = vw[k - n];
                    values[p] = -w;
                    p += 1;
                    diag += w;
                    b += py[k - n] * w;
                }
                if j > 0 {
                    let w = uw[k - 1];
                    values[p] = -w;
                    p += 1;
                    diag += w;
                    b += px[k - 1] * w;
                }
                let self_pos = p;
                p += 1;
                if j + 1 < n {
                    let w = uw[k];
                    values[p] = -w;
                    p += 1;
                    diag += w;
                    b -= px[k] * w;
                }
                if i + 1 < m {
                    let w = vw[k];
                    values[p] = -w;
                    p += 1;
                    diag += w;
                    b -= py[k] * w;
                }
                values[self_pos] = diag;
                rhs[k] = b;
            }
        }
        debug_assert_eq!(p, values.len());
        Ok(())
    }
}

/// Builds the system for weights `(u, v)` and gradient `psi` (cell units).
pub fn assemble<T: Real>(
    psi: &GradientField<T>,
    u: &ScalarField<T>,
    v: &ScalarField<T>,
) -> Result<SparseSystem<T>> {
    let mut system = SparseSystem::zeros(*psi.grid());
    system.assemble_into(psi, u, v)?;
    Ok(system)
}
