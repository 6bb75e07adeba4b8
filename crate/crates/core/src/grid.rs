//! Sampling grid, scalar fields and gradient fields.
//!
//! Indices are zero-based: `i` is the row (y direction, `0..rows`) and `j`
//! the column (x direction, `0..cols`). A cell `(i, j)` is stored at linear
//! index `k = i * cols + j`. A one-based sample `(i', j')` in conventional
//! notation maps to `(i' - 1, j' - 1)` here.

use crate::error::{Error, Result};
use crate::scalar::{norm2, Real};

/// Rectangular grid of `rows x cols` samples with spacings `h_x`, `h_y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    h_x: T,
    h_y: T,
}

impl<T: Real> Grid<T> {
    /// Unit-spaced grid.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        Self::with_spacing(rows, cols, T::one(), T::one())
    }

    pub fn with_spacing(rows: usize, cols: usize, h_x: T, h_y: T) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if rows.checked_mul(cols).is_none() {
            return Err(Error::InvalidGrid(format!("{rows}x{cols} overflows")));
        }
        if !(h_x > T::zero() && h_y > T::zero()) || !h_x.is_finite() || !h_y.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "spacings must be positive and finite, got h_x={h_x}, h_y={h_y}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            h_x,
            h_y,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn h_x(&self) -> T {
        self.h_x
    }

    pub fn h_y(&self) -> T {
        self.h_y
    }

    /// Number of cells, `rows * cols`.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        i * self.cols + j
    }

    /// Same grid with unit spacing.
    pub fn unit(&self) -> Self {
        Self {
            h_x: T::one(),
            h_y: T::one(),
            ..*self
        }
    }

    pub(crate) fn ensure_same(&self, other: &Self, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: {}x{} (h={}, {}) vs {}x{} (h={}, {})",
                self.rows,
                self.cols,
                self.h_x,
                self.h_y,
                other.rows,
                other.cols,
                other.h_x,
                other.h_y
            )));
        }
        Ok(())
    }
}

/// Real-valued samples on a [`Grid`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: Grid<T>, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Wraps row-major values, rejecting wrong lengths and non-finite entries.
    pub fn from_vec(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field from `f(i, j)`.
    pub fn from_fn(grid: Grid<T>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.rows() {
            for j in 0..grid.cols() {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[self.grid.index(i, j)]
    }

    pub fn mean(&self) -> T {
        let sum: T = self.values.iter().copied().sum();
        sum / T::from_usize_lossy(self.values.len())
    }

    pub fn norm2(&self) -> T {
        norm2(&self.values)
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_constant(&self, c: T) -> Self {
        self.map(|v| v + c)
    }

    /// Same samples relabelled onto `grid`, which must have the same shape.
    pub fn with_grid(self, grid: Grid<T>) -> Result<Self> {
        if grid.rows() != self.grid.rows() || grid.cols() != self.grid.cols() {
            return Err(Error::GridMismatch(format!(
                "cannot relabel {}x{} as {}x{}",
                self.grid.rows(),
                self.grid.cols(),
                grid.rows(),
                grid.cols()
            )));
        }
        Ok(Self { grid, ..self })
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.grid.ensure_same(&other.grid, "sub")?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }
}

/// Measured gradient `(psi_x, psi_y)` on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField<T> {
    psi_x: ScalarField<T>,
    psi_y: ScalarField<T>,
}

impl<T: Real> GradientField<T> {
    pub fn new(psi_x: ScalarField<T>, psi_y: ScalarField<T>) -> Result<Self> {
        psi_x
            .grid()
            .ensure_same(psi_y.grid(), "gradient components")?;
        Ok(Self { psi_x, psi_y })
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self {
            psi_x: ScalarField::zeros(grid),
            psi_y: ScalarField::zeros(grid),
        }
    }

    /// Discrete gradient `(forward_diff_x(f), forward_diff_y(f))`.
    pub fn of(f: &ScalarField<T>) -> Self {
        Self {
            psi_x: forward_diff_x(f),
            psi_y: forward_diff_y(f),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        self.psi_x.grid()
    }

    pub fn psi_x(&self) -> &ScalarField<T> {
        &self.psi_x
    }

    pub fn psi_y(&self) -> &ScalarField<T> {
        &self.psi_y
    }

    pub fn into_parts(self) -> (ScalarField<T>, ScalarField<T>) {
        (self.psi_x, self.psi_y)
    }

    pub fn is_zero(&self) -> bool {
        self.psi_x
            .values()
            .iter()
            .chain(self.psi_y.values())
            .all(|v| v.is_zero())
    }

    /// Rescales to per-cell differences (`psi_x * h_x`, `psi_y * h_y`) on the
    /// unit-spaced grid. The assembled system assumes unit spacing.
    pub fn to_cell_units(&self) -> Self {
        let grid = self.grid();
        let unit = grid.unit();
        if *grid == unit {
            return self.clone();
        }
        let (hx, hy) = (grid.h_x(), grid.h_y());
        Self {
            psi_x: ScalarField::from_vec_unchecked(
                unit,
                self.psi_x.values().iter().map(|&v| v * hx).collect(),
            ),
            psi_y: ScalarField::from_vec_unchecked(
                unit,
                self.psi_y.values().iter().map(|&v| v * hy).collect(),
            ),
        }
    }
}

/// Forward difference along x (columns). The last column is 0.
pub fn forward_diff_x<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    let grid = *f.grid();
    let (m, n) = (grid.rows(), grid.cols());
    let inv_h = T::one() / grid.h_x();
    let v = f.values();
    let mut out = vec![T::zero(); grid.len()];
    for i in 0..m {
        let row = i * n;
        for j in 0..n - 1 {
            out[row + j] = (v[row + j + 1] - v[row + j]) * inv_h;
        }
    }
    ScalarField::from_vec_unchecked(grid, out)
}

/// Forward difference along y (rows). The last row is 0.
pub fn forward_diff_y<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    let grid = *f.grid();
    let (m, n) = (grid.rows(), grid.cols());
    let inv_h = T::one() / grid.h_y();
    let v = f.values();
    let mut out = vec![T::zero(); grid.len()];
    for k in 0..(m - 1) * n {
        out[k] = (v[k + n] - v[k]) * inv_h;
    }
    ScalarField::from_vec_unchecked(grid, out)
}

/// Shifts `f` by a constant so that its mean equals the mean of `reference`.
///
/// Shifts below the rounding bound of the two means are skipped, which makes
/// the operation exactly idempotent.
pub fn mean_align<T: Real>(
    f: &ScalarField<T>,
    reference: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    f.grid().ensure_same(reference.grid(), "mean_align")?;
    let c = reference.mean() - f.mean();
    let noise =
        T::epsilon() * T::from_usize_lossy(f.values().len()) * (f.max_abs() + reference.max_abs());
    if c.abs() <= noise {
        return Ok(f.clone());
    }
    Ok(f.add_constant(c))
}

/// Subtracts the mean in place.
pub(crate) fn remove_mean<T: Real>(values: &mut [T]) {
    let mean = values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len());
    for v in values.iter_mut() {
        *v -= mean;
    }
}
