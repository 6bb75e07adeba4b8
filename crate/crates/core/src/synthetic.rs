//! Synthetic discontinuous wavefront, noise injection, error metric and
//! fringe rendering.
//!
//! The test surface is a peaks-style function
//!
//! ```text
//! theta(x, y) = 15 (1 - x)^2 exp(-x^2 - (y + 1)^2)
//!             - 50 (x/5 - x^3 - y^5) exp(-x^2 - y^2)
//!             - 5/3 exp(-(x + 1)^2 - y^2)
//! ```
//!
//! sampled on `[-1, 1] x [-1, 1]` with its sign flipped for `x < 0`, which
//! puts a step discontinuity along `x = 0`. Column `j` maps to
//! `x = -1 + 2 j / (cols - 1)` and row `i` to `y = -1 + 2 i / (rows - 1)`,
//! both multiplied by `coord_scale` before evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{forward_diff_x, forward_diff_y, GradientField, Grid, ScalarField};
use crate::scalar::Real;

/// How the gradient of the synthetic surface is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradientMode {
    /// Forward differences of the sampled surface. Exactly integrable and
    /// carries the jump.
    #[default]
    Discrete,
    /// Pointwise `+-grad theta` in cell units. Misses the jump, so the data
    /// is not integrable across `x = 0`.
    Analytic,
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradientMode::Discrete => "discrete",
            GradientMode::Analytic => "analytic",
        })
    }
}

impl std::str::FromStr for GradientMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "discrete" => Ok(GradientMode::Discrete),
            "analytic" => Ok(GradientMode::Analytic),
            other => Err(format!(
                "unknown mode {other:?}, expected discrete|analytic"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub coord_scale: f64,
    pub mode: GradientMode,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            rows: 480,
            cols: 640,
            coord_scale: 1.0,
            mode: GradientMode::Discrete,
        }
    }
}

impl SyntheticSpec {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            ..Self::default()
        }
    }

    pub fn with_mode(self, mode: GradientMode) -> Self {
        Self { mode, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coord_scale > 0.0 && self.coord_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coord_scale must be positive, got {}",
                self.coord_scale
            )));
        }
        Grid::<f64>::new(self.rows, self.cols).map(|_| ())
    }

    /// Unit-spaced sampling grid; gradients are in cell units.
    pub fn grid<T: Real>(&self) -> Result<Grid<T>> {
        self.validate()?;
        Grid::new(self.rows, self.cols)
    }

    /// Unscaled domain coordinate of column `j`.
    pub fn x(&self, j: usize) -> f64 {
        -1.0 + 2.0 * j as f64 / (self.cols - 1) as f64
    }

    /// Unscaled domain coordinate of row `i`.
    pub fn y(&self, i: usize) -> f64 {
        -1.0 + 2.0 * i as f64 / (self.rows - 1) as f64
    }
}

/// The smooth surface before the sign flip.
pub fn theta(x: f64, y: f64) -> f64 {
    let e1 = (-x * x - (y + 1.0) * (y + 1.0)).exp();
    let e2 = (-x * x - y * y).exp();
    let e3 = (-(x + 1.0) * (x + 1.0) - y * y).exp();
    15.0 * (1.0 - x).powi(2) * e1 - 50.0 * (x / 5.0 - x.powi(3) - y.powi(5)) * e2 - 5.0 / 3.0 * e3
}

/// `(d theta / dx, d theta / dy)`.
pub fn theta_gradient(x: f64, y: f64) -> (f64, f64) {
    let e1 = (-x * x - (y + 1.0) * (y + 1.0)).exp();
    let e2 = (-x * x - y * y).exp();
    let e3 = (-(x + 1.0) * (x + 1.0) - y * y).exp();
    let poly = x / 5.0 - x.powi(3) - y.powi(5);
    let dx = -30.0 * (1.0 - x) * e1
        - 30.0 * x * (1.0 - x).powi(2) * e1
        - 50.0 * (0.2 - 3.0 * x * x) * e2
        + 100.0 * x * poly * e2
        + 10.0 / 3.0 * (x + 1.0) * e3;
    let dy = -30.0 * (1.0 - x).powi(2) * (y + 1.0) * e1
        + 250.0 * y.powi(4) * e2
        + 100.0 * y * poly * e2
        + 10.0 / 3.0 * y * e3;
    (dx, dy)
}

/// Discontinuous wavefront: `theta` for `x >= 0`, `-theta` for `x < 0`.
pub fn peaks_value(x: f64, y: f64) -> f64 {
    let t = theta(x, y);
    if x >= 0.0 {
        t
    } else {
        -t
    }
}

/// Samples the discontinuous wavefront on the grid of `spec`.
pub fn peaks_wavefront<T: Real>(spec: &SyntheticSpec) -> Result<ScalarField<T>> {
    let grid = spec.grid()?;
    let s = spec.coord_scale;
    Ok(ScalarField::from_fn(grid, |i, j| {
        T::lit(peaks_value(s * spec.x(j), s * spec.y(i)))
    }))
}

/// Analytic gradient of the wavefront in cell units.
pub fn analytic_gradient<T: Real>(spec: &SyntheticSpec) -> Result<GradientField<T>> {
    let grid = spec.grid()?;
    let s = spec.coord_scale;
    let dx_dj = s * 2.0 / (spec.cols - 1) as f64;
    let dy_di = s * 2.0 / (spec.rows - 1) as f64;
    let mut gx = Vec::with_capacity(grid.len());
    let mut gy = Vec::with_capacity(grid.len());
    for i in 0..spec.rows {
        for j in 0..spec.cols {
            let (x, y) = (s * spec.x(j), s * spec.y(i));
            let sign = if x >= 0.0 { 1.0 } else { -1.0 };
            let (tx, ty) = theta_gradient(x, y);
            gx.push(T::lit(sign * tx * dx_dj));
            gy.push(T::lit(sign * ty * dy_di));
        }
    }
    GradientField::new(
        ScalarField::from_vec(grid, gx)?,
        ScalarField::from_vec(grid, gy)?,
    )
}

/// Gradient of `phi`. Analytic mode needs the synthetic description that
/// produced `phi`.
pub fn gradient_of<T: Real>(
    phi: &ScalarField<T>,
    mode: GradientMode,
    spec: Option<&SyntheticSpec>,
) -> Result<GradientField<T>> {
    match mode {
        GradientMode::Discrete => Ok(GradientField::of(phi)),
        GradientMode::Analytic => {
            let spec = spec.ok_or_else(|| {
                Error::Unsupported("analytic gradients exist only for the synthetic surface".into())
            })?;
            let psi = analytic_gradient(spec)?;
            phi.grid().ensure_same(psi.grid(), "analytic gradient")?;
            Ok(psi)
        }
    }
}

fn rms<T: Real>(f: &ScalarField<T>) -> T {
    f.norm2() / T::from_usize_lossy(f.values().len()).sqrt()
}

/// Adds zero-mean Gaussian noise to each component with standard deviation
/// `level_percent / 100` times that component's RMS value.
///
/// Component `c` (0 = x, 1 = y) draws from ChaCha8 stream `c` seeded by
/// `seed`, one normal sample per cell in row-major order.
pub fn add_noise<T: Real>(
    psi: &GradientField<T>,
    level_percent: f64,
    seed: u64,
) -> Result<GradientField<T>> {
    if !(level_percent >= 0.0) || !level_percent.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise level must be a non-negative percentage, got {level_percent}"
        )));
    }
    if level_percent == 0.0 {
        return Ok(psi.clone());
    }
    let noisy = |f: &ScalarField<T>, stream: u64| -> Result<ScalarField<T>> {
        let sigma = T::lit(level_percent / 100.0) * rms(f);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let values = f
            .values()
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + sigma * T::lit(z)
            })
            .collect();
        ScalarField::from_vec(*f.grid(), values)
    };
    GradientField::new(noisy(psi.psi_x(), 0)?, noisy(psi.psi_y(), 1)?)
}

/// Normalized error `||mu - nu|| / (||mu|| + ||nu||)`, in `[0, 1]`.
/// Two zero fields compare as 0.
pub fn q_error<T: Real>(mu: &ScalarField<T>, nu: &ScalarField<T>) -> Result<T> {
    mu.grid().ensure_same(nu.grid(), "q_error")?;
    let denom = mu.norm2() + nu.norm2();
    if denom.is_zero() {
        return Ok(T::zero());
    }
    Ok(mu.sub(nu)?.norm2() / denom)
}

/// Background or modulation term of a fringe pattern.
#[derive(Clone, Debug, PartialEq)]
pub enum Modulation<T> {
    Constant(T),
    Field(ScalarField<T>),
}

impl<T: Real> Modulation<T> {
    fn at(&self, k: usize) -> T {
        match self {
            Modulation::Constant(c) => *c,
            Modulation::Field(f) => f.values()[k],
        }
    }
}

/// Parameters of a displayed-and-captured fringe pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct FringeSpec<T> {
    pub background: Modulation<T>,
    pub amplitude: Modulation<T>,
    /// Period, in the same length units as the grid spacing.
    pub period: T,
    /// Pattern normal angle in radians; the direction is `(cos, sin)`.
    pub angle: T,
    /// Screen distance multiplier on the wavefront gradient.
    pub distance: T,
}

impl<T: Real> FringeSpec<T> {
    pub fn direction(&self) -> (T, T) {
        (self.angle.cos(), self.angle.sin())
    }
}

/// Renders `a + b cos(2 pi / q (x.v + D grad(phi).v))` with `x = j h_x`,
/// `y = i h_y`. The gradient uses forward differences; the last column/row
/// repeats the previous difference.
pub fn render_fringe<T: Real>(
    phi: &ScalarField<T>,
    spec: &FringeSpec<T>,
) -> Result<ScalarField<T>> {
    let grid = *phi.grid();
    if !(spec.period > T::zero()) {
        return Err(Error::InvalidParameter(
            "fringe period must be positive".into(),
        ));
    }
    for m in [&spec.background, &spec.amplitude] {
        if let Modulation::Field(f) = m {
            grid.ensure_same(f.grid(), "fringe modulation")?;
        }
    }
    let (m, n) = (grid.rows(), grid.cols());
    let gx = forward_diff_x(phi);
    let gy = forward_diff_y(phi);
    let (vx, vy) = spec.direction();
    let k0 = T::TAU() / spec.period;
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            let dx = gx.get(i, j.min(n - 2));
            let dy = gy.get(i.min(m - 2), j);
            let x = T::from_usize_lossy(j) * grid.h_x();
            let y = T::from_usize_lossy(i) * grid.h_y();
            let arg = k0 * (x * vx + y * vy + spec.distance * (dx * vx + dy * vy));
            out.push(spec.background.at(k) + spec.amplitude.at(k) * arg.cos());
        }
    }
    ScalarField::from_vec(grid, out)
}
