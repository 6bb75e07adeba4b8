//! Data-dependent IRLS weights.
//!
//! For a residual `r` between a forward difference of the current iterate
//! and the measured gradient, the weight is `eps / (|r|^(2-p) + eps)`, which
//! lies in `(0, 1]`. Cells whose forward difference would leave the grid
//! (last column for `U`, last row for `V`) get weight exactly 0; this is
//! what imposes the natural boundary condition in the assembled system.

use crate::error::{Error, Result};
use crate::grid::{GradientField, ScalarField};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightParams<T> {
    p: T,
    epsilon: T,
    least_squares: bool,
}

impl<T: Real> WeightParams<T> {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    /// IRLS weights for exponent `p < 2`.
    pub fn new(p: T, epsilon: T) -> Result<Self> {
        if !p.is_finite() || p >= T::lit(2.0) {
            return Err(Error::InvalidParameter(format!(
                "p must be finite and < 2 for reweighting, got {p}"
            )));
        }
        Self::check_epsilon(epsilon)?;
        Ok(Self {
            p,
            epsilon,
            least_squares: false,
        })
    }

    /// The `p = 2` baseline: every interior weight is `eps / (1 + eps)`.
    pub fn least_squares(epsilon: T) -> Result<Self> {
        Self::check_epsilon(epsilon)?;
        Ok(Self {
            p: T::lit(2.0),
            epsilon,
            least_squares: true,
        })
    }

    fn check_epsilon(epsilon: T) -> Result<()> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(())
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn is_least_squares(&self) -> bool {
        self.least_squares
    }

    /// Weight for one residual.
    #[inline]
    pub fn weight(&self, residual: T) -> T {
        let eps = self.epsilon;
        if self.least_squares {
            return eps / (T::one() + eps);
        }
        let a = residual.abs();
        if a.is_zero() {
            return T::one();
        }
        let pow = ((T::lit(2.0) - self.p) * a.ln()).exp();
        eps / (pow + eps)
    }
}

/// Computes `(U, V)` from the iterate `phi` and the gradient `psi`, both in
/// cell units (unit spacing).
pub fn compute_weights<T: Real>(
    phi: &ScalarField<T>,
    psi: &GradientField<T>,
    params: &WeightParams<T>,
) -> Result<(ScalarField<T>, ScalarField<T>)> {
    let grid = *phi.grid();
    grid.ensure_same(psi.grid(), "compute_weights")?;
    let (m, n) = (grid.rows(), grid.cols());
    let f = phi.values();
    let px = psi.psi_x().values();
    let py = psi.psi_y().values();

    let mut u = vec![T::zero(); grid.len()];
    let mut v = vec![T::zero(); grid.len()];
    for i in 0..m {
        let row = i * n;
        for j in 0..n - 1 {
            let k = row + j;
            let r = f[k + 1] - f[k] - px[k];
            if !r.is_finite() {
                return Err(Error::NonFinite(k));
            }
            u[k] = params.weight(r);
        }
    }
    for k in 0..(m - 1) * n {
        let r = f[k + n] - f[k] - py[k];
        if !r.is_finite() {
            return Err(Error::NonFinite(k));
        }
        v[k] = params.weight(r);
    }
    Ok((
        ScalarField::from_vec_unchecked(grid, u),
        ScalarField::from_vec_unchecked(grid, v),
    ))
}
