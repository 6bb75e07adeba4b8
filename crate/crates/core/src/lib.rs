//! Discontinuity-preserving integration of measured 2-D gradient fields.
//!
//! Given slopes `(psi_x, psi_y)` on a rectangular grid, [`integrate`] finds
//! the wavefront `phi` minimizing `sum |grad phi - psi|^p` for `p < 2` by
//! iteratively reweighted least squares. Each reweighting step solves a
//! sparse weighted 5-point system with ILU(0)-preconditioned conjugate
//! gradient. Small `p` (0 to 1) keeps steps and kinks that a least-squares
//! fit ([`integrate_least_squares`]) smears out.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the file formats and the CLI
//! use.
//!
//! ```
//! use lpw::{integrate, peaks_wavefront, GradientField, IntegrationParams, SyntheticSpec};
//!
//! let spec = SyntheticSpec::new(24, 32);
//! let truth = peaks_wavefront::<f64>(&spec).unwrap();
//! let psi = GradientField::of(&truth);
//! let (phi, report) = integrate(&psi, &IntegrationParams::with_p(1.0)).unwrap();
//! assert!(report.converged);
//! let aligned = lpw::mean_align(&phi, &truth).unwrap();
//! assert!(lpw::q_error(&aligned, &truth).unwrap() < 1e-6);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cli;
pub mod error;
pub mod grid;
pub mod io;
pub mod irls;
pub mod pcg;
pub mod scalar;
pub mod sparse;
pub mod synthetic;
pub mod weights;

pub use assembly::{assemble, stencil_pattern, SparseSystem};
pub use error::{Error, Result};
pub use grid::{forward_diff_x, forward_diff_y, mean_align, GradientField, Grid, ScalarField};
pub use irls::{
    initial_guess, integrate, integrate_least_squares, Init, IntegrationParams, OuterStep,
    SolveReport,
};
pub use pcg::{
    build_ilu0, pcg_solve, pcg_solve_with, Ilu0, PcgOutcome, PcgParams, Preconditioner,
    PreconditionerKind,
};
pub use scalar::Real;
pub use sparse::{CsrMatrix, CsrPattern};
pub use synthetic::{
    add_noise, analytic_gradient, gradient_of, peaks_wavefront, q_error, render_fringe, FringeSpec,
    GradientMode, Modulation, SyntheticSpec,
};
pub use weights::{compute_weights, WeightParams};

pub type Grid64 = Grid<f64>;
pub type Field64 = ScalarField<f64>;
pub type Gradient64 = GradientField<f64>;
pub type System64 = SparseSystem<f64>;
pub type Grid32 = Grid<f32>;
pub type Field32 = ScalarField<f32>;
pub type Gradient32 = GradientField<f32>;
