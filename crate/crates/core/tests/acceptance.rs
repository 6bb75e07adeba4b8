//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::path::Path;
use std::process::Command;
use std::time::Duration;

use lpw::synthetic::{
    add_noise, gradient_of, peaks_wavefront, q_error, GradientMode, SyntheticSpec,
};
use lpw::{
    assemble, initial_guess, integrate, integrate_least_squares, mean_align, pcg_solve, CsrMatrix,
    Field64, Gradient64, Grid64, Init, IntegrationParams, PcgParams, Preconditioner, ScalarField,
    SolveReport,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn q_aligned(phi: &Field64, truth: &Field64) -> f64 {
    q_error(&mean_align(phi, truth).unwrap(), truth).unwrap()
}

fn run_p(psi: &Gradient64, p: f64, params: &IntegrationParams) -> (Field64, SolveReport) {
    let params = IntegrationParams {
        p,
        ..params.clone()
    };
    if p >= 2.0 {
        integrate_least_squares(psi, &params).unwrap()
    } else {
        integrate(psi, &params).unwrap()
    }
}

fn p_label(p: f64) -> String {
    if p >= 2.0 {
        "LS".into()
    } else {
        format!("p={p}")
    }
}

/// Reports kept for the PCG-contract check.
type Reports = Vec<(String, SolveReport)>;

fn criterion_1(reports: &mut Reports) -> Outcome {
    let spec = SyntheticSpec::new(480, 640);
    let truth = peaks_wavefront::<f64>(&spec).unwrap();
    let psi = gradient_of(&truth, GradientMode::Discrete, Some(&spec)).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (p, bound) in [(0.0, 1e-6), (0.5, 1e-6), (1.0, 1e-6), (1.5, 1e-5)] {
        let (phi, rep) = run_p(&psi, p, &IntegrationParams::default());
        let q = q_aligned(&phi, &truth);
        let secs = rep.wall_time.as_secs_f64();
        let ok = q <= bound && rep.wall_time <= Duration::from_secs(120);
        pass &= ok;
        let inner_ok = (1400 / 3..=1400 * 3).contains(&rep.total_inner_iters);
        parts.push(format!(
            "p={p}: Q={q:.2e} (<= {bound:.0e}) t={secs:.1}s inner={}{}",
            rep.total_inner_iters,
            if inner_ok {
                ""
            } else {
                " [outside 3x of 1400, logged only]"
            }
        ));
        reports.push((format!("c1 p={p}"), rep));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_2(reports: &mut Reports) -> Outcome {
    let spec = SyntheticSpec::new(240, 320).with_mode(GradientMode::Analytic);
    let truth = peaks_wavefront::<f64>(&spec).unwrap();
    let psi = gradient_of(&truth, GradientMode::Analytic, Some(&spec)).unwrap();
    let band: Vec<usize> = (0..spec.cols).filter(|&j| spec.x(j).abs() < 0.05).collect();
    let mut stats = Vec::new();
    for p in [1.0, 2.0] {
        let (phi, rep) = run_p(&psi, p, &IntegrationParams::default());
        let aligned = mean_align(&phi, &truth).unwrap();
        let q = q_error(&aligned, &truth).unwrap();
        let mut band_err = 0.0f64;
        for i in 0..spec.rows {
            for &j in &band {
                band_err = band_err.max((aligned.get(i, j) - truth.get(i, j)).abs());
            }
        }
        stats.push((q, band_err));
        reports.push((format!("c2 {}", p_label(p)), rep));
    }
    let ((q1, e1), (q2, e2)) = (stats[0], stats[1]);
    outcome(
        q1 < q2 && e1 < e2,
        format!("240x320: Q(p=1)={q1:.3e} < Q(LS)={q2:.3e}; band max err {e1:.3e} < {e2:.3e} ({} columns)", band.len()),
    )
}

fn criterion_3(reports: &mut Reports) -> Outcome {
    let spec = SyntheticSpec::new(120, 160);
    let truth = peaks_wavefront::<f64>(&spec).unwrap();
    let clean = gradient_of(&truth, GradientMode::Discrete, Some(&spec)).unwrap();
    let levels = [0.0, 1.0, 3.0, 5.0];
    let mut means = Vec::new();
    let mut ses = Vec::new();
    for level in levels {
        let qs: Vec<f64> = (0..5u64)
            .map(|seed| {
                let psi = add_noise(&clean, level, seed).unwrap();
                let params = IntegrationParams {
                    seed,
                    ..IntegrationParams::default()
                };
                let (phi, rep) = run_p(&psi, 0.0, &params);
                reports.push((format!("c3 noise={level} seed={seed}"), rep));
                q_aligned(&phi, &truth)
            })
            .collect();
        let n = qs.len() as f64;
        let mean = qs.iter().sum::<f64>() / n;
        let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1.0);
        means.push(mean);
        ses.push((var / n).sqrt());
    }
    let mut inversions = 0;
    let mut within_se = true;
    for k in 1..levels.len() {
        if means[k] < means[k - 1] {
            inversions += 1;
            let se = (ses[k].powi(2) + ses[k - 1].powi(2)).sqrt();
            within_se &= means[k - 1] - means[k] <= se;
        }
    }
    let pass = inversions == 0 || (inversions == 1 && within_se);
    let table: Vec<String> = levels
        .iter()
        .zip(means.iter().zip(&ses))
        .map(|(l, (m, s))| format!("{l}%: {m:.3e}±{s:.1e}"))
        .collect();
    outcome(
        pass,
        format!(
            "120x160 p=0 mean Q {}; inversions={inversions}",
            table.join(", ")
        ),
    )
}

/// Dense normal equations built edge by edge from the energy
/// `sum U (phi[k+1] - phi[k] - psi_x)^2 + V (phi[k+N] - phi[k] - psi_y)^2`.
fn dense_system(psi: &Gradient64, u: &Field64, v: &Field64) -> (DMatrix<f64>, DVector<f64>) {
    let g = psi.grid();
    let (m, n) = (g.rows(), g.cols());
    let len = m * n;
    let mut a = DMatrix::zeros(len, len);
    let mut b = DVector::zeros(len);
    let mut edge = |from: usize, to: usize, w: f64, target: f64| {
        a[(from, from)] += w;
        a[(to, to)] += w;
        a[(from, to)] -= w;
        a[(to, from)] -= w;
        b[to] += w * target;
        b[from] -= w * target;
    };
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            if j + 1 < n {
                edge(k, k + 1, u.get(i, j), psi.psi_x().get(i, j));
            }
            if i + 1 < m {
                edge(k, k + n, v.get(i, j), psi.psi_y().get(i, j));
            }
        }
    }
    (a, b)
}

fn random_field(grid: Grid64, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field64 {
    ScalarField::from_fn(grid, |_, _| rng.random_range(lo..hi))
}

/// Weights in (0, 1].
fn random_weights(grid: Grid64, rng: &mut ChaCha8Rng) -> Field64 {
    ScalarField::from_fn(grid, |_, _| 1.0 - rng.random::<f64>())
}

fn csr_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.n(), a.n(), &a.to_dense())
}

fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().svd(true, true).pseudo_inverse(1e-10).unwrap() * b
}

fn max_diff_up_to_constant(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let shift = x.iter().zip(y).map(|(a, b)| a - b).sum::<f64>() / n;
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b - shift).abs())
        .fold(0.0, f64::max)
}

/// IRLS with a dense minimum-norm inner solve.
fn dense_irls(psi: &Gradient64, params: &IntegrationParams) -> Field64 {
    let grid = *psi.grid();
    let (p, eps) = (params.p, params.epsilon);
    let weight = |r: f64| {
        if p >= 2.0 {
            eps / (1.0 + eps)
        } else {
            eps / (r.abs().powf(2.0 - p) + eps)
        }
    };
    let mut phi = initial_guess(grid, params.init, params.seed).into_values();
    let (m, n) = (grid.rows(), grid.cols());
    for _ in 0..params.max_outer {
        let cur = |i: usize, j: usize| phi[i * n + j];
        let u = ScalarField::from_fn(grid, |i, j| {
            if j + 1 < n {
                weight(cur(i, j + 1) - cur(i, j) - psi.psi_x().get(i, j))
            } else {
                0.0
            }
        });
        let v = ScalarField::from_fn(grid, |i, j| {
            if i + 1 < m {
                weight(cur(i + 1, j) - cur(i, j) - psi.psi_y().get(i, j))
            } else {
                0.0
            }
        });
        let (a, b) = dense_system(psi, &u, &v);
        let next: Vec<f64> = pinv_solve(&a, &b).iter().copied().collect();
        let prev_norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let change = next
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let rel = if prev_norm > 0.0 {
            change / prev_norm
        } else {
            change
        };
        phi = next;
        if rel <= params.tol {
            break;
        }
    }
    ScalarField::from_vec(grid, phi).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_assembly = 0.0f64;
    let mut worst_pcg = 0.0f64;
    for (rows, cols) in [
        (2, 2),
        (2, 5),
        (3, 3),
        (4, 7),
        (5, 5),
        (6, 8),
        (8, 10),
        (8, 10),
        (8, 10),
    ] {
        let grid = Grid64::new(rows, cols).unwrap();
        let psi = Gradient64::new(
            random_field(grid, &mut rng, -2.0, 2.0),
            random_field(grid, &mut rng, -2.0, 2.0),
        )
        .unwrap();
        let u = random_weights(grid, &mut rng);
        let v = random_weights(grid, &mut rng);
        let sys = assemble(&psi, &u, &v).unwrap();
        let (a, b) = dense_system(&psi, &u, &v);
        let got = csr_dense(sys.matrix());
        worst_assembly = worst_assembly.max((got - &a).abs().max());
        let rhs_err = sys
            .rhs()
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst_assembly = worst_assembly.max(rhs_err);

        let params = PcgParams {
            kappa: 1e-13,
            ..PcgParams::for_size(grid.len())
        };
        let x0 = vec![0.0; grid.len()];
        let out = pcg_solve(sys.matrix(), sys.rhs(), &x0, &params).unwrap();
        let reference: Vec<f64> = pinv_solve(&a, &b).iter().copied().collect();
        worst_pcg = worst_pcg.max(max_diff_up_to_constant(&out.x, &reference));
    }

    let spec = SyntheticSpec::new(8, 10);
    let truth = peaks_wavefront::<f64>(&spec).unwrap();
    let psi = gradient_of(&truth, GradientMode::Discrete, Some(&spec)).unwrap();
    let mut worst_q = 0.0f64;
    for p in [0.0, 0.5, 1.0, 1.5, 2.0] {
        for seed in [0, 1, 2] {
            let params = IntegrationParams {
                p,
                seed,
                ..IntegrationParams::default()
            };
            let (phi, _) = run_p(&psi, p, &params);
            let oracle = dense_irls(&psi, &params);
            worst_q = worst_q.max((q_aligned(&phi, &truth) - q_aligned(&oracle, &truth)).abs());
        }
    }
    outcome(
        worst_assembly <= 1e-12 && worst_pcg <= 1e-8 && worst_q <= 1e-6,
        format!("assembly max err {worst_assembly:.1e} (<= 1e-12); pcg vs pinv {worst_pcg:.1e} (<= 1e-8); |dQ| vs dense IRLS {worst_q:.1e} (<= 1e-6)"),
    )
}

fn criterion_5() -> Outcome {
    let grid = Grid64::new(16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut sym, mut rowsum, mut min_quad, mut min_eig, mut sum_b) =
        (0.0f64, 0.0f64, f64::INFINITY, f64::INFINITY, 0.0f64);
    let mut dominant = true;
    for _ in 0..50 {
        let psi = Gradient64::new(
            random_field(grid, &mut rng, -5.0, 5.0),
            random_field(grid, &mut rng, -5.0, 5.0),
        )
        .unwrap();
        let u = random_weights(grid, &mut rng);
        let v = random_weights(grid, &mut rng);
        let sys = assemble(&psi, &u, &v).unwrap();
        let a = csr_dense(sys.matrix());
        let n = a.nrows();
        sym = sym.max((&a - a.transpose()).abs().max());
        for r in 0..n {
            let row = a.row(r);
            rowsum = rowsum.max(row.sum().abs());
            let off: f64 = (0..n).filter(|&c| c != r).map(|c| row[c].abs()).sum();
            dominant &= a[(r, r)] >= off;
        }
        for _ in 0..10 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            min_quad = min_quad.min(x.dot(&(&a * &x)) / x.norm_squared());
        }
        min_eig = min_eig.min(SymmetricEigen::new(a.clone()).eigenvalues.min());
        let b1: f64 = sys.rhs().iter().map(|b| b.abs()).sum();
        sum_b = sum_b.max(sys.rhs().iter().sum::<f64>().abs() / b1);
    }
    let pass = sym <= 1e-10
        && rowsum <= 1e-12
        && min_quad >= -1e-12
        && min_eig >= -1e-12
        && dominant
        && sum_b <= 1e-10;
    outcome(
        pass,
        format!(
            "50 configs 16x16: asym {sym:.1e}; |row sum| {rowsum:.1e}; min x.Ax/|x|^2 {min_quad:.2e}; min eig {min_eig:.1e}; diag dominant {dominant}; |sum b|/|b|_1 {sum_b:.1e}"
        ),
    )
}

fn criterion_6(reports: &mut Reports) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = Grid64::new(33, 41).unwrap();
    let mut fields: Vec<(String, Field64)> = vec![(
        "peaks 120x160".into(),
        peaks_wavefront(&SyntheticSpec::new(120, 160)).unwrap(),
    )];
    fields.push((
        "uniform noise 33x41".into(),
        random_field(g, &mut rng, -1.0, 1.0),
    ));
    let steps = random_field(g, &mut rng, -10.0, 10.0);
    fields.push((
        "piecewise constant 33x41".into(),
        ScalarField::from_fn(g, |i, j| steps.get(i / 8 * 8, j / 10 * 10)),
    ));

    let mut pass = true;
    let mut worst_change = 0.0f64;
    let mut worst_q = 0.0f64;
    let mut max_outer = 0;
    for (name, truth) in &fields {
        let psi = Gradient64::of(truth);
        for p in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let pcg = PcgParams {
                kappa: 1e-8,
                ..PcgParams::for_size(truth.grid().len())
            };
            let params = IntegrationParams {
                pcg: Some(pcg),
                ..IntegrationParams::default()
            };
            let (phi, rep) = run_p(&psi, p, &params);
            let q = q_aligned(&phi, truth);
            let change = rep.trace.get(1).map_or(f64::INFINITY, |s| s.rel_change);
            let ok = change <= params.tol && rep.converged && q <= 1e-6;
            if !ok {
                eprintln!("criterion 6: {name} {}: change after first reweighting {change:.2e}, Q {q:.2e}, {rep:?}", p_label(p));
            }
            pass &= ok;
            worst_change = worst_change.max(change);
            worst_q = worst_q.max(q);
            max_outer = max_outer.max(rep.outer_iters);
            reports.push((format!("c6 {name} {}", p_label(p)), rep));
        }
    }
    outcome(
        pass,
        format!(
            "3 fields x (p in 0,0.5,1,1.5 + LS), kappa=1e-8: max rel change after first solve {worst_change:.1e} (<= 1e-3); max Q {worst_q:.1e} (<= 1e-6); max outer {max_outer}"
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lpw"))
        .args(args)
        .env("LPW_THREADS", "1")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let s = |p: &str| d.join(p).to_string_lossy().into_owned();
    let (synth, grad, truth) = (s("synth"), s("synth/gradient.lpw"), s("synth/truth.lpw"));
    let invocations: Vec<Vec<String>> = vec![
        vec![
            "synth",
            "--rows",
            "60",
            "--cols",
            "80",
            "--noise",
            "2",
            "--seed",
            "7",
            "--out",
            &synth,
            "--preview",
        ],
        vec![
            "integrate",
            &grad,
            "--p",
            "0.5",
            "--seed",
            "3",
            "--truth",
            &truth,
            "--out",
            &s("synth/p05.lpw"),
        ],
        vec![
            "integrate",
            &grad,
            "--p",
            "0",
            "--init",
            "zero",
            "--out",
            &s("synth/p0.csv"),
        ],
        vec![
            "integrate",
            &grad,
            "--least-squares",
            "--out",
            &s("synth/ls.lpw"),
        ],
        vec![
            "render",
            &s("synth/p05.lpw"),
            "--fringe",
            "--out",
            &s("synth/fringe.ppm"),
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();

    let mut runs = Vec::new();
    for _ in 0..2 {
        for args in &invocations {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            if let Err(e) = run_cli(&args) {
                return outcome(false, format!("CLI failed: {e}"));
            }
        }
        runs.push(snapshot(Path::new(&synth)));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    outcome(
        differing.is_empty() && runs[0].len() == runs[1].len(),
        format!(
            "{} files compared ({}); differing: {differing:?}",
            names.len(),
            names.join(", ")
        ),
    )
}

fn criterion_8(reports: &Reports) -> Outcome {
    const KAPPA: f64 = 0.005;
    let bound = KAPPA * KAPPA;
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut pass = true;
    for (name, rep) in reports {
        for (k, step) in rep.trace.iter().enumerate() {
            if step.inner_converged && step.delta0 > 0.0 {
                checked += 1;
                let ratio = step.delta / step.delta0;
                worst = worst.max(ratio);
                if ratio > bound {
                    pass = false;
                    eprintln!("criterion 8: {name} outer {k}: delta/delta0 = {ratio:.3e}");
                }
            }
        }
    }

    // Independent recomputation of the exit energy on noisy IRLS systems.
    let spec = SyntheticSpec::new(60, 80);
    let truth = peaks_wavefront::<f64>(&spec).unwrap();
    let clean = gradient_of(&truth, GradientMode::Discrete, Some(&spec)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut direct = 0;
    for seed in 0..6 {
        let psi = add_noise(&clean, 3.0, seed).unwrap();
        let grid = *psi.grid();
        let u = random_weights(grid, &mut rng);
        let v = random_weights(grid, &mut rng);
        let sys = assemble(&psi, &u, &v).unwrap();
        let params = PcgParams::for_size(grid.len());
        let x0 = initial_guess(grid, Init::Random, seed).into_values();
        let out = pcg_solve(sys.matrix(), sys.rhs(), &x0, &params).unwrap();
        if !out.converged {
            pass = false;
            eprintln!("criterion 8: direct solve {seed} did not converge");
            continue;
        }
        let precond = match out.preconditioner {
            lpw::PreconditionerKind::Ilu0 => Preconditioner::for_matrix(sys.matrix()),
            lpw::PreconditionerKind::Jacobi => Preconditioner::jacobi(sys.matrix()),
        };
        let energy = |x: &[f64]| {
            let ax = sys.apply(x).unwrap();
            let r: Vec<f64> = sys.rhs().iter().zip(&ax).map(|(b, a)| b - a).collect();
            let mut z = vec![0.0; r.len()];
            precond.apply_into(&r, &mut z);
            r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
        };
        let ratio = energy(&out.x) / energy(&x0);
        direct += 1;
        worst = worst.max(ratio);
        if ratio > bound {
            pass = false;
            eprintln!("criterion 8: direct solve {seed}: recomputed ratio {ratio:.3e}");
        }
    }
    outcome(
        pass && checked > 0,
        format!("{checked} converged inner solves from the runs above + {direct} direct solves: max delta/delta0 {worst:.3e} (<= {bound:.1e})"),
    )
}

fn main() {
    let mut reports = Reports::new();
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "full-size reconstruction", criterion_1(&mut reports)),
        (2, "edge preservation", criterion_2(&mut reports)),
        (3, "noise monotonicity", criterion_3(&mut reports)),
        (4, "small-instance oracle equivalence", criterion_4()),
        (5, "matrix properties", criterion_5()),
        (6, "exact-data single pass", criterion_6(&mut reports)),
        (7, "CLI determinism", criterion_7()),
        (8, "PCG contract", criterion_8(&reports)),
    ];

    let mut failed = 0;
    for (n, name, o) in &results {
        println!(
            "criterion {n} ({name}): {} | {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
