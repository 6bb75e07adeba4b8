//! Compressed-row sparse matrices with a shareable symbolic pattern.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row offsets and sorted column indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag: Vec<Option<usize>>,
}

impl CsrPattern {
    /// Builds a square pattern. Columns within a row must be strictly
    /// increasing and `< n`.
    pub fn new(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Result<Self> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || row_ptr[n] != col_idx.len() {
            return Err(Error::InvalidParameter("malformed row offsets".into()));
        }
        let mut diag = Vec::with_capacity(n);
        for r in 0..n {
            let (lo, hi) = (row_ptr[r], row_ptr[r + 1]);
            if lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "row {r}: decreasing offsets"
                )));
            }
            let cols = &col_idx[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= n) {
                return Err(Error::InvalidParameter(format!(
                    "row {r}: columns must be sorted, unique and < {n}"
                )));
            }
            diag.push(cols.binary_search(&r).ok().map(|p| lo + p));
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            diag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    #[inline]
    pub fn row(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    /// Position of the diagonal entry of row `r`, if stored.
    #[inline]
    pub fn diag_pos(&self, r: usize) -> Option<usize> {
        self.diag[r]
    }

    /// Position of entry `(r, c)`, if stored.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.row(r);
        self.col_idx[range.clone()]
            .binary_search(&c)
            .ok()
            .map(|p| range.start + p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    pattern: Arc<CsrPattern>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn new(pattern: Arc<CsrPattern>, values: Vec<T>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::DimensionMismatch {
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        Ok(Self { pattern, values })
    }

    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        Self { pattern, values }
    }

    /// Builds from row-major dense data, storing entries that are nonzero
    /// or on the diagonal.
    pub fn from_dense(n: usize, dense: &[T]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: dense.len(),
            });
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let a = dense[r * n + c];
                if r == c || !a.is_zero() {
                    col_idx.push(c);
                    values.push(a);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let pattern = Arc::new(CsrPattern::new(n, row_ptr, col_idx)?);
        Ok(Self { pattern, values })
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Entry `(r, c)`, zero if not stored.
    pub fn get(&self, r: usize, c: usize) -> T {
        self.pattern
            .find(r, c)
            .map_or(T::zero(), |p| self.values[p])
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n())
            .map(|r| {
                self.pattern
                    .diag_pos(r)
                    .map_or(T::zero(), |p| self.values[p])
            })
            .collect()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = vec![T::zero(); self.n()];
        self.apply_into(x, &mut y)?;
        Ok(y)
    }

    pub fn apply_into(&self, x: &[T], y: &mut [T]) -> Result<()> {
        let n = self.n();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        self.apply_unchecked(x, y);
        Ok(())
    }

    #[inline]
    pub(crate) fn apply_unchecked(&self, x: &[T], y: &mut [T]) {
        let rp = self.pattern.row_ptr();
        let ci = self.pattern.col_idx();
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in rp[r]..rp[r + 1] {
                acc += self.values[p] * x[ci[p]];
            }
            *out = acc;
        }
    }

    /// Dense row-major copy, for small problems and tests.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.n();
        let mut d = vec![T::zero(); n * n];
        for r in 0..n {
            for p in self.pattern.row(r) {
                d[r * n + self.pattern.col_idx()[p]] = self.values[p];
            }
        }
        d
    }
}
