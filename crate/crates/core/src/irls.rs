//! Outer reweighting loop.
//!
//! Each outer iteration recomputes the weights from the current iterate,
//! reassembles the system, rebuilds the preconditioner and runs PCG warm
//! started from the current iterate. The additive constant is not determined
//! by the data, so every iterate is shifted to zero mean before the relative
//! change `||phi_next - phi|| / ||phi||` is measured.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::SparseSystem;
use crate::error::{Error, Result};
use crate::grid::{remove_mean, GradientField, Grid, ScalarField};
use crate::pcg::{
    pcg_solve, pcg_solve_with, PcgOutcome, PcgParams, Preconditioner, PreconditionerKind,
};
use crate::scalar::{norm2, Real};
use crate::weights::{compute_weights, WeightParams};

/// Starting iterate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Init {
    /// Uniform samples in `[0, 1)` from the seeded generator.
    #[default]
    Random,
    Zero,
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Init::Random => "random",
            Init::Zero => "zero",
        })
    }
}

impl std::str::FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random" => Ok(Init::Random),
            "zero" => Ok(Init::Zero),
            other => Err(format!("unknown init {other:?}, expected random|zero")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationParams {
    pub p: f64,
    pub epsilon: f64,
    /// Maximum outer iterations.
    pub max_outer: usize,
    /// Relative-change tolerance of the outer loop.
    pub tol: f64,
    /// Inner solver settings; `None` uses [`PcgParams::for_size`].
    pub pcg: Option<PcgParams>,
    pub seed: u64,
    pub init: Init,
}

impl Default for IntegrationParams {
    fn default() -> Self {
        Self {
            p: 0.0,
            epsilon: WeightParams::<f64>::DEFAULT_EPSILON,
            max_outer: 100,
            tol: 1e-3,
            pcg: None,
            seed: 0,
            init: Init::Random,
        }
    }
}

impl IntegrationParams {
    pub fn with_p(p: f64) -> Self {
        Self {
            p,
            ..Self::default()
        }
    }

    pub fn pcg_for(&self, n: usize) -> PcgParams {
        self.pcg.unwrap_or_else(|| PcgParams::for_size(n))
    }

    fn validate(&self) -> Result<()> {
        if self.max_outer < 1 {
            return Err(Error::InvalidParameter("max_outer must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if let Some(p) = &self.pcg {
            p.validate()?;
        }
        Ok(())
    }
}

/// One outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterStep {
    pub inner_iters: usize,
    pub rel_change: f64,
    pub inner_converged: bool,
    pub delta0: f64,
    pub delta: f64,
    pub preconditioner: PreconditionerKind,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    pub final_rel_change: f64,
    /// True when the relative change reached `tol` before `max_outer`.
    pub converged: bool,
    pub trace: Vec<OuterStep>,
    pub wall_time: Duration,
}

impl SolveReport {
    fn empty() -> Self {
        Self {
            outer_iters: 0,
            total_inner_iters: 0,
            final_rel_change: 0.0,
            converged: false,
            trace: Vec::new(),
            wall_time: Duration::ZERO,
        }
    }
}

impl PartialEq for SolveReport {
    /// Compares everything except wall time.
    fn eq(&self, other: &Self) -> bool {
        self.outer_iters == other.outer_iters
            && self.total_inner_iters == other.total_inner_iters
            && self.final_rel_change.to_bits() == other.final_rel_change.to_bits()
            && self.converged == other.converged
            && self.trace == other.trace
    }
}

/// Starting iterate for `grid`.
pub fn initial_guess<T: Real>(grid: Grid<T>, init: Init, seed: u64) -> ScalarField<T> {
    match init {
        Init::Zero => ScalarField::zeros(grid),
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ScalarField::from_fn(grid, |_, _| T::lit(rng.random::<f64>()))
        }
    }
}

/// Minimizes the sum of `|grad phi - psi|^p` over the grid for `p < 2`.
///
/// Returns a zero-mean wavefront on the grid of `psi`.
pub fn integrate<T: Real>(
    psi: &GradientField<T>,
    params: &IntegrationParams,
) -> Result<(ScalarField<T>, SolveReport)> {
    let weights = WeightParams::new(T::lit(params.p), T::lit(params.epsilon))?;
    run(psi, params, weights)
}

/// Least-squares (`p = 2`) baseline.
///
/// The weights are the constant `eps / (1 + eps)`, so the system is assembled
/// and factored once; the outer loop only restarts PCG from the previous
/// iterate until the relative change reaches `tol`.
pub fn integrate_least_squares<T: Real>(
    psi: &GradientField<T>,
    params: &IntegrationParams,
) -> Result<(ScalarField<T>, SolveReport)> {
    let weights = WeightParams::least_squares(T::lit(params.epsilon))?;
    run(psi, params, weights)
}

fn run<T: Real>(
    psi: &GradientField<T>,
    params: &IntegrationParams,
    weights: WeightParams<T>,
) -> Result<(ScalarField<T>, SolveReport)> {
    params.validate()?;
    let start = Instant::now();
    let out_grid = *psi.grid();
    let psi = psi.to_cell_units();
    let grid = *psi.grid();
    let mut report = SolveReport::empty();

    if psi.is_zero() {
        report.converged = true;
        report.wall_time = start.elapsed();
        return Ok((ScalarField::zeros(out_grid), report));
    }

    let pcg = params.pcg_for(grid.len());
    let mut phi = initial_guess(grid, params.init, params.seed).into_values();
    let mut system = SparseSystem::zeros(grid);
    let mut fixed_precond = None;

    for k in 0..params.max_outer {
        let solve = if weights.is_least_squares() {
            let precond = fixed_precond.get_or_insert_with(|| {
                let (u, v) = compute_weights(&ScalarField::zeros(grid), &psi, &weights)
                    .expect("constant weights");
                system.assemble_into(&psi, &u, &v).expect("grids agree");
                Preconditioner::for_matrix(system.matrix())
            });
            pcg_solve_with(system.matrix(), system.rhs(), &phi, &pcg, precond)
        } else {
            let current = ScalarField::from_vec_unchecked(grid, phi.clone());
            let (u, v) = compute_weights(&current, &psi, &weights)?;
            system.assemble_into(&psi, &u, &v)?;
            pcg_solve(system.matrix(), system.rhs(), &phi, &pcg)
        };
        let PcgOutcome {
            x: mut next,
            iterations,
            converged: inner_converged,
            delta0,
            delta,
            preconditioner,
            ..
        } = solve.map_err(|e| match e {
            Error::SolverBreakdown { inner, reason, .. } => Error::SolverBreakdown {
                outer: k,
                inner,
                reason,
            },
            other => other,
        })?;
        remove_mean(&mut next);

        let rel_change = relative_change(&next, &phi);
        report.outer_iters = k + 1;
        report.total_inner_iters += iterations;
        report.final_rel_change = rel_change;
        report.trace.push(OuterStep {
            inner_iters: iterations,
            rel_change,
            inner_converged,
            delta0: delta0.as_f64(),
            delta: delta.as_f64(),
            preconditioner,
        });
        phi = next;
        if let Some(c) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::SolverBreakdown {
                outer: k,
                inner: iterations,
                reason: format!("non-finite iterate at cell {c}"),
            });
        }
        if rel_change <= params.tol {
            report.converged = true;
            break;
        }
    }

    report.wall_time = start.elapsed();
    let phi = ScalarField::from_vec_unchecked(grid, phi).with_grid(out_grid)?;
    Ok((phi, report))
}

/// `||next - prev|| / ||prev||`; the absolute change when `prev` is zero.
fn relative_change<T: Real>(next: &[T], prev: &[T]) -> f64 {
    let diff = next
        .iter()
        .zip(prev)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
        .sqrt();
    let denom = norm2(prev);
    if denom.is_zero() {
        diff.as_f64()
    } else {
        (diff / denom).as_f64()
    }
}
