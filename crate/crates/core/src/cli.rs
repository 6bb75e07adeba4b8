//! Command-line front end.
//!
//! Exit codes: 0 success/converged, 2 usage error, 3 I/O or input-data
//! error, 4 outer iteration limit reached without convergence, 5 solver
//! breakdown.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::grid::{mean_align, GradientField, ScalarField};
use crate::io::{self, FieldFile, Manifest, Range};
use crate::irls::{integrate, integrate_least_squares, Init, IntegrationParams, SolveReport};
use crate::pcg::PcgParams;
use crate::synthetic::{
    add_noise, gradient_of, peaks_wavefront, q_error, render_fringe, FringeSpec, GradientMode,
    Modulation, SyntheticSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_BREAKDOWN: i32 = 5;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "LPW_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "lpw",
    version,
    about = "L^p-norm integration of gradient fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic discontinuous wavefront and its gradient.
    Synth(SynthArgs),
    /// Integrate a gradient field into a wavefront.
    Integrate(IntegrateArgs),
    /// Compare two wavefronts (normalized error after mean alignment).
    Compare(CompareArgs),
    /// Sweep p and noise level on synthetic data, writing CSV.
    Sweep(SweepArgs),
    /// Render a field or a fringe pattern to PGM/PPM.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Discrete,
    Analytic,
}

impl From<ModeArg> for GradientMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Discrete => GradientMode::Discrete,
            ModeArg::Analytic => GradientMode::Analytic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Random,
    Zero,
}

impl From<InitArg> for Init {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Random => Init::Random,
            InitArg::Zero => Init::Zero,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 480)]
    rows: usize,
    #[arg(long, default_value_t = 640)]
    cols: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Discrete)]
    mode: ModeArg,
    /// Multiplier applied to the domain coordinates before evaluation.
    #[arg(long, default_value_t = 1.0)]
    coord_scale: f64,
}

impl SyntheticArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            rows: self.rows,
            cols: self.cols,
            coord_scale: self.coord_scale,
            mode: self.mode.into(),
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Maximum outer (reweighting) iterations.
    #[arg(long, default_value_t = 100)]
    kmax: usize,
    /// Relative-change tolerance of the outer loop.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Inner iteration cap as a multiple of the number of cells.
    #[arg(long, default_value_t = 1.5)]
    lmax_factor: f64,
    /// Inner relative residual tolerance.
    #[arg(long, default_value_t = 0.005)]
    kappa: f64,
    /// Exact residual recomputation period [default: floor(sqrt(cells))].
    #[arg(long)]
    restart_period: Option<usize>,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    init: InitArg,
}

impl SolverArgs {
    fn pcg(&self, n: usize) -> PcgParams {
        let mut p = PcgParams::with_factor(n, self.lmax_factor);
        p.kappa = self.kappa;
        if let Some(r) = self.restart_period {
            p.restart_period = r;
        }
        p
    }

    fn params(&self, p: f64, seed: u64, n: usize) -> IntegrationParams {
        IntegrationParams {
            p,
            epsilon: self.epsilon,
            max_outer: self.kmax,
            tol: self.tol,
            pcg: Some(self.pcg(n)),
            seed,
            init: self.init.into(),
        }
    }

    fn check(&self) -> Result<(), Failure> {
        if !(self.lmax_factor > 0.0) || !self.lmax_factor.is_finite() {
            return Err(Failure::usage("--lmax-factor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    synthetic: SyntheticArgs,
    /// Gaussian noise, percent of each component's RMS.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write 16-bit PGM previews.
    #[arg(long)]
    preview: bool,
    /// Also write CSV copies of the fields.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct IntegrateArgs {
    /// Gradient field (.lpw binary or .csv).
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Least-squares (p = 2) baseline.
    #[arg(long)]
    least_squares: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth wavefront for the error report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output wavefront; the manifest goes to `<out>.manifest`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-run the integration recorded in a manifest. `--out` overrides the
    /// recorded output path.
    #[arg(long, conflicts_with_all = ["input", "p", "least_squares", "seed", "truth"])]
    from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    estimate: PathBuf,
    reference: PathBuf,
    /// Absolute-difference image (.pgm or .ppm).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    range: Range,
    /// Write `q,max_abs_diff` as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    synthetic: SyntheticArgs,
    /// Comma-separated p values.
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<f64>,
    /// Comma-separated noise levels in percent.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    noise: Vec<f64>,
    /// Repetitions per (p, noise); repetition r uses seed + r.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run p = 2 entries as the least-squares baseline.
    #[arg(long)]
    least_squares: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Component {
    X,
    Y,
}

#[derive(Debug, Args)]
struct RenderArgs {
    input: PathBuf,
    /// Output image; `.ppm` selects the colour map, anything else 16-bit PGM.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    range: Range,
    /// Gradient component to render for gradient files.
    #[arg(long, value_enum, default_value_t = Component::X)]
    component: Component,
    /// Render the fringe pattern the wavefront would produce.
    #[arg(long)]
    fringe: bool,
    /// Fringe period in grid length units.
    #[arg(long, default_value_t = 16.0)]
    period: f64,
    /// Fringe normal angle in degrees (0 gives vertical fringes).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    angle: f64,
    /// Screen distance multiplier.
    #[arg(long, default_value_t = 1.0)]
    distance: f64,
    #[arg(long, default_value_t = 0.5)]
    background: f64,
    #[arg(long, default_value_t = 0.5)]
    amplitude: f64,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::Unsupported(_) => {
                EXIT_USAGE
            }
            Error::Io { .. }
            | Error::Format { .. }
            | Error::GridMismatch(_)
            | Error::DimensionMismatch { .. } => EXIT_IO,
            Error::SolverBreakdown { .. }
            | Error::PreconditionerBreakdown { .. }
            | Error::NonFinite(_) => EXIT_BREAKDOWN,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Integrate(a) => cmd_integrate(a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Render(a) => cmd_render(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn mkdir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn cmd_synth(a: &SynthArgs) -> CmdResult {
    let spec = a.synthetic.spec();
    spec.validate()?;
    if !(a.noise >= 0.0) {
        return Err(Failure::usage("--noise must be >= 0"));
    }
    let truth = peaks_wavefront::<f64>(&spec)?;
    let clean = gradient_of(&truth, spec.mode, Some(&spec))?;
    let psi = add_noise(&clean, a.noise, a.seed)?;

    mkdir(&a.out)?;
    let truth_path = a.out.join("truth.lpw");
    let grad_path = a.out.join("gradient.lpw");
    io::write_any(&truth_path, &FieldFile::Scalar(truth.clone()))?;
    io::write_any(&grad_path, &FieldFile::Gradient(psi.clone()))?;
    if a.csv {
        io::write_any(&a.out.join("truth.csv"), &FieldFile::Scalar(truth.clone()))?;
        io::write_any(
            &a.out.join("gradient.csv"),
            &FieldFile::Gradient(psi.clone()),
        )?;
    }
    if a.preview {
        io::write_image(&a.out.join("truth.pgm"), &truth, Range::Auto)?;
        io::write_image(&a.out.join("psi_x.pgm"), psi.psi_x(), Range::Auto)?;
        io::write_image(&a.out.join("psi_y.pgm"), psi.psi_y(), Range::Auto)?;
    }

    let mut m = Manifest::new();
    m.set("command", "synth");
    m.set("rows", spec.rows);
    m.set("cols", spec.cols);
    m.set("mode", spec.mode);
    m.set("coord_scale", spec.coord_scale);
    m.set("domain", "[-1,1]x[-1,1]");
    m.set("gradient_units", "cell");
    m.set("noise_percent", a.noise);
    m.set(
        "noise_model",
        "gaussian, sigma = noise_percent/100 * rms(component)",
    );
    m.set("seed", a.seed);
    m.set("truth", truth_path.display());
    m.set("gradient", grad_path.display());
    m.write(&a.out.join("synth.manifest"))?;
    println!("wrote {} and {}", truth_path.display(), grad_path.display());
    Ok(EXIT_OK)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Everything needed to repeat one integration.
#[derive(Debug, Clone, PartialEq)]
struct IntegrateJob {
    input: PathBuf,
    truth: Option<PathBuf>,
    out: PathBuf,
    least_squares: bool,
    params: IntegrationParams,
}

impl IntegrateJob {
    fn to_manifest(&self) -> Manifest {
        let p = &self.params;
        let pcg = p.pcg.expect("resolved");
        let mut m = Manifest::new();
        m.set("command", "integrate");
        m.set("input", self.input.display());
        m.set(
            "truth",
            self.truth
                .as_ref()
                .map_or(String::new(), |t| t.display().to_string()),
        );
        m.set("out", self.out.display());
        m.set("least_squares", self.least_squares);
        m.set("p", p.p);
        m.set("epsilon", p.epsilon);
        m.set("kmax", p.max_outer);
        m.set("tol", p.tol);
        m.set("lmax", pcg.max_iters);
        m.set("kappa", pcg.kappa);
        m.set("restart_period", pcg.restart_period);
        m.set("seed", p.seed);
        m.set("init", p.init);
        m
    }

    fn from_manifest(m: &Manifest, origin: &Path) -> Result<Self, Failure> {
        let bad = |k: &str| {
            Failure::from(Error::format(
                origin,
                format!("missing or invalid key {k:?}"),
            ))
        };
        let get = |k: &str| m.get(k).ok_or_else(|| bad(k));
        fn parse<V: std::str::FromStr>(v: &str) -> Option<V> {
            v.parse().ok()
        }
        if get("command")? != "integrate" {
            return Err(bad("command"));
        }
        let num = |k: &str| -> Result<f64, Failure> { parse(get(k)?).ok_or_else(|| bad(k)) };
        let int = |k: &str| -> Result<usize, Failure> { parse(get(k)?).ok_or_else(|| bad(k)) };
        let truth = get("truth")?;
        Ok(Self {
            input: PathBuf::from(get("input")?),
            truth: (!truth.is_empty()).then(|| PathBuf::from(truth)),
            out: PathBuf::from(get("out")?),
            least_squares: parse(get("least_squares")?).ok_or_else(|| bad("least_squares"))?,
            params: IntegrationParams {
                p: num("p")?,
                epsilon: num("epsilon")?,
                max_outer: int("kmax")?,
                tol: num("tol")?,
                pcg: Some(PcgParams {
                    max_iters: int("lmax")?,
                    kappa: num("kappa")?,
                    restart_period: int("restart_period")?,
                }),
                seed: parse(get("seed")?).ok_or_else(|| bad("seed"))?,
                init: parse(get("init")?).ok_or_else(|| bad("init"))?,
            },
        })
    }
}

fn read_gradient(path: &Path) -> Result<GradientField<f64>, Failure> {
    match io::read_any(path)? {
        FieldFile::Gradient(g) => Ok(g),
        FieldFile::Scalar(_) => {
            Err(Error::format(path, "expected a gradient field, found a scalar field").into())
        }
    }
}

fn read_scalar(path: &Path) -> Result<ScalarField<f64>, Failure> {
    match io::read_any(path)? {
        FieldFile::Scalar(f) => Ok(f),
        FieldFile::Gradient(_) => {
            Err(Error::format(path, "expected a scalar field, found a gradient field").into())
        }
    }
}

fn run_integration(
    psi: &GradientField<f64>,
    least_squares: bool,
    params: &IntegrationParams,
) -> crate::error::Result<(ScalarField<f64>, SolveReport)> {
    if least_squares {
        integrate_least_squares(psi, params)
    } else {
        integrate(psi, params)
    }
}

fn cmd_integrate(a: IntegrateArgs) -> CmdResult {
    a.solver.check()?;
    let job = if let Some(mpath) = &a.from_manifest {
        let mut job = IntegrateJob::from_manifest(&Manifest::read(mpath)?, mpath)?;
        if let Some(out) = a.out {
            job.out = out;
        }
        job
    } else {
        let input = a
            .input
            .ok_or_else(|| Failure::usage("missing input gradient file"))?;
        let out = a.out.ok_or_else(|| Failure::usage("missing --out"))?;
        if !a.least_squares && a.p >= 2.0 {
            return Err(Failure::usage("p >= 2 requires --least-squares"));
        }
        let p = if a.least_squares { 2.0 } else { a.p };
        let n = read_gradient(&input)?.grid().len();
        IntegrateJob {
            input,
            truth: a.truth,
            out,
            least_squares: a.least_squares,
            params: a.solver.params(p, a.seed, n),
        }
    };

    let psi = read_gradient(&job.input)?;
    let truth = job.truth.as_deref().map(read_scalar).transpose()?;
    let (phi, report) = run_integration(&psi, job.least_squares, &job.params)?;
    io::write_any(&job.out, &FieldFile::Scalar(phi.clone()))?;

    let mut m = job.to_manifest();
    m.set("rows", phi.grid().rows());
    m.set("cols", phi.grid().cols());
    m.set("outer_iters", report.outer_iters);
    m.set("total_inner_iters", report.total_inner_iters);
    m.set("final_rel_change", report.final_rel_change);
    m.set("converged", report.converged);
    let inner: Vec<String> = report
        .trace
        .iter()
        .map(|s| s.inner_iters.to_string())
        .collect();
    m.set("trace_inner_iters", inner.join(","));
    let changes: Vec<String> = report
        .trace
        .iter()
        .map(|s| s.rel_change.to_string())
        .collect();
    m.set("trace_rel_change", changes.join(","));
    if let Some(t) = &truth {
        let aligned = mean_align(&phi, t)?;
        m.set("q", q_error(&aligned, t)?);
    }
    m.write(&manifest_path(&job.out))?;

    let mut line = format!(
        "outer_iters={} inner_iters={} rel_change={:e} converged={} seconds={:.3}",
        report.outer_iters,
        report.total_inner_iters,
        report.final_rel_change,
        report.converged,
        report.wall_time.as_secs_f64()
    );
    if let Some(q) = m.get("q") {
        let _ = write!(line, " q={q}");
    }
    println!("{line}");
    Ok(if report.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn cmd_compare(a: &CompareArgs) -> CmdResult {
    let est = read_scalar(&a.estimate)?;
    let reference = read_scalar(&a.reference)?;
    let aligned = mean_align(&est, &reference)?;
    let q = q_error(&aligned, &reference)?;
    let diff = aligned.sub(&reference)?.map(f64::abs);
    let max_abs = diff.max_abs();
    println!("q = {q:e}");
    println!("max_abs_diff = {max_abs:e}");
    if let Some(out) = &a.out {
        io::write_image(out, &diff, a.range)?;
    }
    if let Some(csv) = &a.csv {
        std::fs::write(csv, format!("q,max_abs_diff\n{q:e},{max_abs:e}\n"))
            .map_err(|e| Error::io(csv, e))?;
    }
    Ok(EXIT_OK)
}

/// Worker count from `LPW_THREADS`, else the available parallelism.
fn thread_cap() -> Result<usize, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone)]
struct SweepRow {
    p: f64,
    noise: f64,
    seed: u64,
    q: f64,
    outer: usize,
    inner: usize,
    seconds: f64,
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    a.solver.check()?;
    let ps = sorted_unique(a.p.clone());
    let levels = sorted_unique(a.noise.clone());
    if ps.is_empty() {
        return Err(Failure::usage("empty p list"));
    }
    if a.repeats == 0 {
        return Err(Failure::usage("--repeats must be >= 1"));
    }
    if let Some(bad) = ps
        .iter()
        .find(|&&p| !p.is_finite() || (p >= 2.0 && !(a.least_squares && p == 2.0)))
    {
        return Err(Failure::usage(format!(
            "p = {bad} is not allowed; p must be < 2 (or exactly 2 with --least-squares)"
        )));
    }
    if levels.iter().any(|l| !(*l >= 0.0)) {
        return Err(Failure::usage("noise levels must be >= 0"));
    }
    let spec = a.synthetic.spec();
    spec.validate()?;
    let truth = peaks_wavefront::<f64>(&spec)?;
    let clean = gradient_of(&truth, spec.mode, Some(&spec))?;
    let n = truth.grid().len();

    let mut jobs = Vec::new();
    for &p in &ps {
        for &level in &levels {
            for r in 0..a.repeats {
                jobs.push((p, level, a.seed + r));
            }
        }
    }
    let results: Vec<Mutex<Option<Result<SweepRow, Failure>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = thread_cap()?.min(jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(p, level, seed)) = jobs.get(idx) else {
                    break;
                };
                let row = (|| -> Result<SweepRow, Failure> {
                    let psi = add_noise(&clean, level, seed)?;
                    let params = a.solver.params(p, seed, n);
                    let (phi, rep) = run_integration(&psi, p == 2.0, &params)?;
                    let q = q_error(&mean_align(&phi, &truth)?, &truth)?;
                    Ok(SweepRow {
                        p,
                        noise: level,
                        seed,
                        q,
                        outer: rep.outer_iters,
                        inner: rep.total_inner_iters,
                        seconds: rep.wall_time.as_secs_f64(),
                    })
                })();
                *results[idx].lock().unwrap() = Some(row);
            });
        }
    });

    let mut text = String::from("p,noise_level,seed,q,outer_iters,inner_iters,seconds\n");
    for cell in results {
        let row = cell.into_inner().unwrap().expect("every job ran")?;
        let _ = writeln!(
            text,
            "{},{},{},{:e},{},{},{:.3}",
            row.p, row.noise, row.seed, row.q, row.outer, row.inner, row.seconds
        );
    }
    match &a.csv {
        Some(path) => std::fs::write(path, &text).map_err(|e| Error::io(path, e))?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

fn cmd_render(a: &RenderArgs) -> CmdResult {
    let field = match io::read_any(&a.input)? {
        FieldFile::Scalar(f) => f,
        FieldFile::Gradient(g) => {
            if a.fringe {
                return Err(Failure::usage("--fringe needs a scalar wavefront"));
            }
            let (x, y) = g.into_parts();
            match a.component {
                Component::X => x,
                Component::Y => y,
            }
        }
    };
    let image = if a.fringe {
        let spec = FringeSpec {
            background: Modulation::Constant(a.background),
            amplitude: Modulation::Constant(a.amplitude),
            period: a.period,
            angle: a.angle.to_radians(),
            distance: a.distance,
        };
        render_fringe(&field, &spec)?
    } else {
        field
    };
    io::write_image(&a.out, &image, a.range)?;
    Ok(EXIT_OK)
}
