//! Preconditioned conjugate gradient with an ILU(0) preconditioner.
//!
//! The iteration stops once the preconditioned residual energy
//! `delta = r' M^-1 r` drops to `kappa^2 * delta_0` or after `max_iters`
//! steps. Every `restart_period` steps (counting from step 0) the residual is
//! recomputed from scratch instead of updated recursively. Convergence is
//! only reported after the energy of the exact residual `b - A x` has been
//! checked against the same threshold; if the recursive residual had drifted,
//! the iteration resumes from the exact residual.

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};
use crate::sparse::CsrMatrix;

/// Inner-solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcgParams {
    /// Maximum number of CG steps.
    pub max_iters: usize,
    /// Relative tolerance on the square root of the residual energy.
    pub kappa: f64,
    /// Exact residual recomputation period.
    pub restart_period: usize,
}

impl PcgParams {
    pub const DEFAULT_KAPPA: f64 = 0.005;
    pub const DEFAULT_MAX_ITERS_FACTOR: f64 = 1.5;

    /// Defaults for a system with `n` unknowns: `floor(1.5 n)` steps,
    /// `kappa = 0.005`, restart every `floor(sqrt(n))` steps.
    pub fn for_size(n: usize) -> Self {
        Self::with_factor(n, Self::DEFAULT_MAX_ITERS_FACTOR)
    }

    /// Defaults with `max_iters = floor(factor * n)`.
    pub fn with_factor(n: usize, factor: f64) -> Self {
        Self {
            max_iters: ((factor * n as f64).floor() as usize).max(1),
            kappa: Self::DEFAULT_KAPPA,
            restart_period: ((n as f64).sqrt().floor() as usize).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa must lie in (0, 1), got {}",
                self.kappa
            )));
        }
        if self.restart_period < 1 {
            return Err(Error::InvalidParameter(
                "restart_period must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Pivots below this fraction of the largest diagonal entry are raised to it.
pub const PIVOT_GUARD: f64 = 1e-12;

/// Incomplete LU factors with no fill, stored on the pattern of `A`.
///
/// Strictly lower entries hold `L` (unit diagonal implied), the diagonal and
/// upper entries hold `U`.
#[derive(Clone, Debug)]
pub struct Ilu0<T> {
    factors: CsrMatrix<T>,
    inv_pivot: Vec<T>,
    guarded_pivots: usize,
}

/// Computes the ILU(0) factorization of `a`.
pub fn build_ilu0<T: Real>(a: &CsrMatrix<T>) -> Result<Ilu0<T>> {
    let pattern = a.pattern().clone();
    let n = pattern.n();
    let rp = pattern.row_ptr();
    let ci = pattern.col_idx();

    let max_diag = a
        .diagonal()
        .into_iter()
        .fold(T::zero(), |m, d| if d.abs() > m { d.abs() } else { m });
    let threshold = T::lit(PIVOT_GUARD) * max_diag;
    if !(threshold > T::zero()) || !threshold.is_finite() {
        return Err(Error::PreconditionerBreakdown { row: 0 });
    }

    let mut lu = a.values().to_vec();
    let mut inv_pivot = vec![T::zero(); n];
    let mut guarded = 0;
    for i in 0..n {
        let diag_i = pattern
            .diag_pos(i)
            .ok_or(Error::PreconditionerBreakdown { row: i })?;
        for p in rp[i]..diag_i {
            let k = ci[p];
            let lik = lu[p] * inv_pivot[k];
            lu[p] = lik;
            // a[i][j] -= l[i][k] * u[k][j] for j > k present in both rows.
            let mut q = p + 1;
            let mut r = pattern.diag_pos(k).expect("pivot row has a diagonal") + 1;
            let (q_end, r_end) = (rp[i + 1], rp[k + 1]);
            while q < q_end && r < r_end {
                match ci[q].cmp(&ci[r]) {
                    std::cmp::Ordering::Less => q += 1,
                    std::cmp::Ordering::Greater => r += 1,
                    std::cmp::Ordering::Equal => {
                        let ukj = lu[r];
                        lu[q] -= lik * ukj;
                        q += 1;
                        r += 1;
                    }
                }
            }
        }
        let mut pivot = lu[diag_i];
        if !pivot.is_finite() {
            return Err(Error::PreconditionerBreakdown { row: i });
        }
        if pivot.abs() < threshold {
            pivot = threshold;
            lu[diag_i] = pivot;
            guarded += 1;
        }
        inv_pivot[i] = T::one() / pivot;
    }

    Ok(Ilu0 {
        factors: CsrMatrix::new(pattern, lu)?,
        inv_pivot,
        guarded_pivots: guarded,
    })
}

impl<T: Real> Ilu0<T> {
    /// Number of pivots replaced by the guard value.
    pub fn guarded_pivots(&self) -> usize {
        self.guarded_pivots
    }

    /// Entry of the unit lower factor.
    pub fn lower(&self, r: usize, c: usize) -> T {
        match r.cmp(&c) {
            std::cmp::Ordering::Less => T::zero(),
            std::cmp::Ordering::Equal => T::one(),
            std::cmp::Ordering::Greater => self.factors.get(r, c),
        }
    }

    /// Entry of the upper factor.
    pub fn upper(&self, r: usize, c: usize) -> T {
        if r > c {
            T::zero()
        } else {
            self.factors.get(r, c)
        }
    }

    /// Solves `L U out = rhs`.
    pub fn solve_into(&self, rhs: &[T], out: &mut [T]) {
        let pattern = self.factors.pattern();
        let rp = pattern.row_ptr();
        let ci = pattern.col_idx();
        let lu = self.factors.values();
        let n = pattern.n();
        for i in 0..n {
            let diag = pattern.diag_pos(i).expect("factor has a diagonal");
            let mut acc = rhs[i];
            for p in rp[i]..diag {
                acc -= lu[p] * out[ci[p]];
            }
            out[i] = acc;
        }
        for i in (0..n).rev() {
            let diag = pattern.diag_pos(i).expect("factor has a diagonal");
            let mut acc = out[i];
            for p in diag + 1..rp[i + 1] {
                acc -= lu[p] * out[ci[p]];
            }
            out[i] = acc * self.inv_pivot[i];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreconditionerKind {
    Ilu0,
    Jacobi,
}

impl std::fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PreconditionerKind::Ilu0 => "ilu0",
            PreconditionerKind::Jacobi => "jacobi",
        })
    }
}

#[derive(Clone, Debug)]
pub enum Preconditioner<T> {
    Ilu0(Ilu0<T>),
    /// Inverse diagonal; zero diagonal entries map to 1.
    Jacobi(Vec<T>),
}

impl<T: Real> Preconditioner<T> {
    /// ILU(0), falling back to Jacobi on breakdown.
    pub fn for_matrix(a: &CsrMatrix<T>) -> Self {
        match build_ilu0(a) {
            Ok(ilu) => Preconditioner::Ilu0(ilu),
            Err(_) => Self::jacobi(a),
        }
    }

    pub fn jacobi(a: &CsrMatrix<T>) -> Self {
        Preconditioner::Jacobi(
            a.diagonal()
                .into_iter()
                .map(|d| if d.is_zero() { T::one() } else { T::one() / d })
                .collect(),
        )
    }

    pub fn kind(&self) -> PreconditionerKind {
        match self {
            Preconditioner::Ilu0(_) => PreconditionerKind::Ilu0,
            Preconditioner::Jacobi(_) => PreconditionerKind::Jacobi,
        }
    }

    /// `out = M^-1 rhs`.
    pub fn apply_into(&self, rhs: &[T], out: &mut [T]) {
        match self {
            Preconditioner::Ilu0(ilu) => ilu.solve_into(rhs, out),
            Preconditioner::Jacobi(inv) => {
                for ((o, &r), &d) in out.iter_mut().zip(rhs).zip(inv) {
                    *o = r * d;
                }
            }
        }
    }
}

/// Result of one inner solve.
#[derive(Clone, Debug)]
pub struct PcgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Initial residual energy `delta_0`.
    pub delta0: T,
    /// Residual energy at exit. When `converged`, computed from the exact
    /// residual `b - A x`.
    pub delta: T,
    /// Energies observed at each exact residual recomputation.
    pub restart_energies: Vec<T>,
    pub preconditioner: PreconditionerKind,
}

/// Solves `A x = b` from `x0`, building the preconditioner from `A`.
///
/// If the ILU(0) preconditioner breaks down, or yields a non-positive initial
/// energy, the solve is done with Jacobi preconditioning instead.
pub fn pcg_solve<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: &[T],
    params: &PcgParams,
) -> Result<PcgOutcome<T>> {
    let precond = Preconditioner::for_matrix(a);
    if precond.kind() == PreconditionerKind::Ilu0 {
        match pcg_solve_with(a, b, x0, params, &precond) {
            Err(Error::SolverBreakdown { inner: 0, .. }) => {}
            other => return other,
        }
        return pcg_solve_with(a, b, x0, params, &Preconditioner::jacobi(a));
    }
    pcg_solve_with(a, b, x0, params, &precond)
}

pub fn pcg_solve_with<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: &[T],
    params: &PcgParams,
    precond: &Preconditioner<T>,
) -> Result<PcgOutcome<T>> {
    params.validate()?;
    let n = a.n();
    for len in [b.len(), x0.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let breakdown = |inner: usize, reason: &str| Error::SolverBreakdown {
        outer: 0,
        inner,
        reason: reason.to_string(),
    };

    let kappa = T::lit(params.kappa);
    let max_diag = a
        .diagonal()
        .into_iter()
        .fold(T::zero(), |m, d| if d.abs() > m { d.abs() } else { m });
    let roundoff = T::epsilon() * T::lit(64.0) * max_diag.max(T::one());

    let mut x = x0.to_vec();
    let mut r = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];

    let exact_residual = |x: &[T], r: &mut [T], scratch: &mut [T]| {
        a.apply_unchecked(x, scratch);
        for ((ri, &bi), &ai) in r.iter_mut().zip(b).zip(scratch.iter()) {
            *ri = bi - ai;
        }
    };

    exact_residual(&x, &mut r, &mut q);
    let mut d = vec![T::zero(); n];
    precond.apply_into(&r, &mut d);
    let mut delta = dot(&r, &d);
    let delta0 = delta;
    if !delta0.is_finite() || delta0 < T::zero() {
        return Err(breakdown(
            0,
            "initial residual energy is negative or not finite",
        ));
    }
    let mut outcome = PcgOutcome {
        x: Vec::new(),
        iterations: 0,
        converged: false,
        delta0,
        delta,
        restart_energies: Vec::new(),
        preconditioner: precond.kind(),
    };
    if delta0.is_zero() {
        outcome.x = x;
        outcome.converged = true;
        return Ok(outcome);
    }
    let target = kappa * kappa * delta0;

    let mut l = 0;
    loop {
        while l < params.max_iters && delta > target {
            a.apply_unchecked(&d, &mut q);
            let dq = dot(&d, &q);
            if !dq.is_finite() {
                return Err(breakdown(l, "non-finite curvature"));
            }
            if dq <= T::zero() {
                if dq < -roundoff * dot(&d, &d) {
                    return Err(breakdown(l, "loss of positive definiteness"));
                }
                // Search direction numerically in the null space.
                outcome.iterations = l;
                outcome.delta = delta;
                outcome.x = x;
                return Ok(outcome);
            }
            let alpha = delta / dq;
            for (xi, &di) in x.iter_mut().zip(&d) {
                *xi += alpha * di;
            }
            let restart = l % params.restart_period == 0;
            if restart {
                exact_residual(&x, &mut r, &mut s);
            } else {
                for (ri, &qi) in r.iter_mut().zip(&q) {
                    *ri -= alpha * qi;
                }
            }
            precond.apply_into(&r, &mut s);
            let delta_old = delta;
            delta = dot(&r, &s);
            if !delta.is_finite() {
                return Err(breakdown(l, "non-finite residual energy"));
            }
            if restart {
                outcome.restart_energies.push(delta);
            }
            let beta = delta / delta_old;
            for (di, &si) in d.iter_mut().zip(&s) {
                *di = si + beta * *di;
            }
            l += 1;
        }

        if delta > target {
            break;
        }
        // Confirm on the exact residual.
        exact_residual(&x, &mut r, &mut q);
        precond.apply_into(&r, &mut s);
        delta = dot(&r, &s);
        outcome.restart_energies.push(delta);
        if delta <= target || l >= params.max_iters {
            break;
        }
        d.copy_from_slice(&s);
    }

    outcome.iterations = l;
    outcome.converged = delta <= target;
    outcome.delta = delta;
    outcome.x = x;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::grid::{GradientField, Grid, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize) -> PcgParams {
        PcgParams::for_size(n)
    }

    fn laplacian_2x2() -> CsrMatrix<f64> {
        let g = Grid::new(2, 2).unwrap();
        let u = ScalarField::from_fn(g, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let v = ScalarField::from_fn(g, |i, _| if i == 0 { 1.0 } else { 0.0 });
        assemble(&GradientField::zeros(g), &u, &v)
            .unwrap()
            .matrix()
            .clone()
    }

    #[test]
    fn defaults_floor_non_integer_expressions() {
        let p = PcgParams::for_size(480 * 640);
        assert_eq!(p.max_iters, 460_800);
        assert_eq!(p.restart_period, 554);
        assert_eq!(p.kappa, 0.005);
        assert_eq!(PcgParams::for_size(5).max_iters, 7);
        assert_eq!(PcgParams::for_size(5).restart_period, 2);
    }

    #[test]
    fn ilu_of_diagonal_is_trivial() {
        let a = CsrMatrix::from_dense(3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.5]).unwrap();
        let ilu = build_ilu0(&a).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(ilu.lower(r, c), if r == c { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(
            [ilu.upper(0, 0), ilu.upper(1, 1), ilu.upper(2, 2)],
            [2.0, 5.0, 0.5]
        );
        let mut out = [0.0; 3];
        ilu.solve_into(&[4.0, 5.0, 1.0], &mut out);
        assert_eq!(out, [2.0, 1.0, 2.0]);
    }

    #[test]
    fn ilu_of_full_2x2_is_exact_lu() {
        let a = CsrMatrix::from_dense(2, &[4.0, -1.0, -1.0, 4.0]).unwrap();
        let ilu = build_ilu0(&a).unwrap();
        assert_eq!(ilu.lower(1, 0), -0.25);
        assert_eq!(ilu.lower(0, 0), 1.0);
        assert_eq!(ilu.lower(0, 1), 0.0);
        assert_eq!([ilu.upper(0, 0), ilu.upper(0, 1)], [4.0, -1.0]);
        assert_eq!([ilu.upper(1, 0), ilu.upper(1, 1)], [0.0, 3.75]);
    }

    #[test]
    fn ilu_drops_fill_outside_pattern() {
        let a = laplacian_2x2();
        let ilu = build_ilu0(&a).unwrap();
        // (2,1) is outside the pattern, so no fill there.
        assert_eq!(ilu.lower(2, 1), 0.0);
        assert_eq!(ilu.upper(1, 2), 0.0);
        assert!((ilu.upper(3, 3) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ilu.guarded_pivots(), 0);
    }

    #[test]
    fn ilu_solve_inverts_lu_product() {
        // Strictly diagonally dominant 5-point matrix on a 6x7 grid.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Grid::new(6, 7).unwrap();
        let n = g.len();
        let u = ScalarField::from_fn(g, |_, j| {
            if j < 6 {
                rng.random_range(0.1..1.0)
            } else {
                0.0
            }
        });
        let v = ScalarField::from_fn(g, |i, _| {
            if i < 5 {
                rng.random_range(0.1..1.0)
            } else {
                0.0
            }
        });
        let lap = assemble(&GradientField::zeros(g), &u, &v).unwrap();
        let mut dense = lap.matrix().to_dense();
        for k in 0..n {
            dense[k * n + k] += 0.5;
        }
        let a = CsrMatrix::from_dense(n, &dense).unwrap();
        let ilu = build_ilu0(&a).unwrap();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut w = vec![0.0; n];
        ilu.solve_into(&v, &mut w);
        // Multiply back: L (U w).
        let uw: Vec<f64> = (0..n)
            .map(|r| (0..n).map(|c| ilu.upper(r, c) * w[c]).sum())
            .collect();
        let luw: Vec<f64> = (0..n)
            .map(|r| (0..n).map(|c| ilu.lower(r, c) * uw[c]).sum())
            .collect();
        for (a, b) in luw.iter().zip(&v) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_matrix_breaks_ilu_and_falls_back() {
        let a = CsrMatrix::from_dense(2, &[0.0; 4]).unwrap();
        assert!(matches!(
            build_ilu0(&a),
            Err(Error::PreconditionerBreakdown { .. })
        ));
        assert_eq!(
            Preconditioner::for_matrix(&a).kind(),
            PreconditionerKind::Jacobi
        );
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = CsrMatrix::from_dense(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let b = [1.5f64, -2.0, 7.0];
        let out = pcg_solve(&a, &b, &[0.0; 3], &params(3)).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        for (x, y) in out.x.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_rhs_from_zero_is_immediate() {
        let a = laplacian_2x2();
        let out = pcg_solve(&a, &[0.0; 4], &[0.0; 4], &params(4)).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![0.0; 4]);
    }

    #[test]
    fn singular_laplacian_consistent_rhs() {
        let a = laplacian_2x2();
        let truth = [1.0, 2.0, 3.0, 4.0];
        let b = a.apply(&truth).unwrap();
        let p = PcgParams {
            kappa: 1e-10,
            ..params(4)
        };
        let out = pcg_solve(&a, &b, &[0.0; 4], &p).unwrap();
        assert!(out.converged);
        let shift = out.x[0] - truth[0];
        for (x, t) in out.x.iter().zip(&truth) {
            assert!((x - t - shift).abs() < 1e-8, "{:?}", out.x);
        }
    }

    #[test]
    fn converged_flag_matches_exact_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = Grid::new(12, 15).unwrap();
        let phi = ScalarField::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
        let psi = GradientField::of(&phi);
        let u = ScalarField::from_fn(g, |_, j| {
            if j < 14 {
                rng.random_range(0.05..1.0)
            } else {
                0.0
            }
        });
        let v = ScalarField::from_fn(g, |i, _| {
            if i < 11 {
                rng.random_range(0.05..1.0)
            } else {
                0.0
            }
        });
        let sys = assemble(&psi, &u, &v).unwrap();
        let p = params(g.len());
        let out = pcg_solve(sys.matrix(), sys.rhs(), &vec![0.0; g.len()], &p).unwrap();
        assert!(out.converged);
        let target = p.kappa * p.kappa * out.delta0;
        assert!(out.delta <= target);
        for e in &out.restart_energies {
            assert!(*e <= out.delta0);
        }
        // Independent recomputation.
        let ax = sys.apply(&out.x).unwrap();
        let r: Vec<f64> = sys.rhs().iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut s = vec![0.0; r.len()];
        Preconditioner::for_matrix(sys.matrix()).apply_into(&r, &mut s);
        assert!(dot(&r, &s) <= target);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Grid::new(20, 20).unwrap();
        let phi = ScalarField::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
        let psi = GradientField::of(&phi);
        let u = ScalarField::from_fn(g, |_, j| if j < 19 { 1.0 } else { 0.0 });
        let v = ScalarField::from_fn(g, |i, _| if i < 19 { 1.0 } else { 0.0 });
        let sys = assemble(&psi, &u, &v).unwrap();
        let p = PcgParams {
            max_iters: 2,
            kappa: 1e-12,
            restart_period: 20,
        };
        let out = pcg_solve(sys.matrix(), sys.rhs(), &vec![0.0; g.len()], &p).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn indefinite_matrix_is_breakdown() {
        let a = CsrMatrix::from_dense(2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        let p = PcgParams::for_size(2);
        let err = pcg_solve_with(
            &a,
            &[0.0, 1.0],
            &[0.0, 0.0],
            &p,
            &Preconditioner::Jacobi(vec![1.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SolverBreakdown { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_params_and_dims() {
        let a = laplacian_2x2();
        let bad = PcgParams {
            kappa: 1.5,
            ..params(4)
        };
        assert!(pcg_solve(&a, &[0.0; 4], &[0.0; 4], &bad).is_err());
        assert!(matches!(
            pcg_solve(&a, &[0.0; 3], &[0.0; 4], &params(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
