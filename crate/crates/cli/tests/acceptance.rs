//! End-to-end acceptance checks. Each test prints a single PASS/FAIL line;
//! run with `--nocapture` to see them.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unipapr_core::bound::expansion_forms;
use unipapr_core::experiment::{default_gamma_grid, median, pmepr_values};
use unipapr_core::{
    aperiodic_autocorr, autocorr_peak_bound, empirical_ccdf, generate_codebook, gradient,
    moment_stats, optimize, peak_envelope_power, project_gram_schmidt, project_symmetric,
    quartic_sums, CMatrix, Codeword, Complex64, ConstellationSpec, OptimizerConfig, Projection,
    SamplingGrid, SpectralPair, StepSize,
};

fn report(criterion: &str, passed: bool, detail: String) {
    println!(
        "{} {criterion}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "{criterion}: {detail}");
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn max_abs(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn unitarity(w: &CMatrix) -> f64 {
    let k = w.nrows();
    max_abs(&(w * w.adjoint()), &CMatrix::identity(k, k))
}

fn random_matrix(k: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(k, k, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn polar_factor(w: &CMatrix) -> CMatrix {
    let svd = w.clone().svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// Shift by `s` on `K` points; the wrapped entries carry `-1` when negacyclic.
fn shift(k: usize, s: usize, negacyclic: bool) -> CMatrix {
    CMatrix::from_fn(k, k, |i, j| {
        match ((j + s) % k == i, negacyclic && j + s >= k) {
            (false, _) => c(0.0, 0.0),
            (true, true) => c(-1.0, 0.0),
            (true, false) => c(1.0, 0.0),
        }
    })
}

fn scale_rows(m: &CMatrix, d: &[Complex64]) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

#[test]
fn criterion_01_eigendecomposition_identity() {
    let mut worst = 0.0f64;
    for k in [2, 4, 8, 64, 128] {
        let pair = SpectralPair::new(k).unwrap();
        for s in 0..k {
            let b = pair.v().adjoint() * scale_rows(pair.v(), &pair.d(s));
            let bh = pair.v_hat().adjoint() * scale_rows(pair.v_hat(), &pair.d_hat(s));
            worst = worst
                .max(max_abs(&b, &shift(k, s, false)))
                .max(max_abs(&bh, &shift(k, s, true)));
        }
    }
    report(
        "1 eigendecomposition identity",
        worst < 1e-10,
        format!("max entry error {worst:.3e} over K in {{2,4,8,64,128}} (tol 1e-10)"),
    );
}

#[test]
fn criterion_02_expansion_identity() {
    let mut worst = 0.0f64;
    for (i, k) in [4, 16, 64].into_iter().enumerate() {
        let pair = SpectralPair::new(k).unwrap();
        let book = generate_codebook(ConstellationSpec::QAM16, k, 200, 1, 20 + i as u64).unwrap();
        for cw in book.codewords() {
            worst = worst.max(expansion_forms(cw, &pair).unwrap().max_rel_discrepancy());
        }
    }
    let pair = SpectralPair::new(4).unwrap();
    let ones = Codeword::ones(4);
    let forms = expansion_forms(&ones, &pair).unwrap();
    let (sa, sb) = quartic_sums(&ones, &pair, None).unwrap();
    let exact = (forms.autocorr - 308.0).abs() < 1e-12
        && (forms.quartic - 308.0).abs() < 1e-9
        && (sa - 16.0).abs() < 1e-12
        && (sb - 6.0).abs() < 1e-12;
    report(
        "2 expansion identity",
        worst < 1e-9 && exact,
        format!(
            "max rel discrepancy {worst:.3e} (tol 1e-9); all-ones K=4: rho-form {} quartic-form {:.12} sums ({sa:.12}, {sb:.12})",
            forms.autocorr, forms.quartic
        ),
    );
}

#[test]
fn criterion_03_bound_chain_ordering() {
    let k = 32;
    let pair = SpectralPair::new(k).unwrap();
    let grid = SamplingGrid::new(k, 64).unwrap();
    let book = generate_codebook(ConstellationSpec::QAM16, k, 1000, 1, 3).unwrap();
    let mut violations = 0;
    for cw in book.codewords() {
        let peak = peak_envelope_power(cw, &grid).unwrap();
        let ac = autocorr_peak_bound(&aperiodic_autocorr(cw));
        let quartic = expansion_forms(cw, &pair).unwrap().quartic;
        // relative slack for rounding in equality cases
        if peak > ac * (1.0 + 1e-12) {
            violations += 1;
        }
        if peak * peak > quartic * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    report(
        "3 bound-chain ordering",
        violations == 0,
        format!("{violations} violations over 1000 codewords, K=32 J=64"),
    );
}

#[test]
fn criterion_04_markov_validity() {
    let k = 16;
    let book = generate_codebook(ConstellationSpec::QAM16, k, 2000, 50, 4).unwrap();
    let pair = SpectralPair::new(k).unwrap();
    let stats = moment_stats(&book, &pair, None).unwrap();
    let gammas = default_gamma_grid(k);
    let curve = empirical_ccdf(&book, None, 16, &gammas).unwrap();
    let mut violations = 0;
    let mut min_gap = f64::INFINITY;
    for (g, p) in gammas.iter().zip(&curve.probability) {
        let upper = stats.report(*g).unwrap().upper;
        min_gap = min_gap.min(upper - p);
        if *p > upper {
            violations += 1;
        }
    }
    report(
        "4 Markov validity",
        violations == 0,
        format!(
            "{violations} violations over {} thresholds, smallest margin {min_gap:.3e}",
            gammas.len()
        ),
    );
}

#[test]
fn criterion_05_jensen_floor() {
    let k = 8;
    let pair = SpectralPair::new(k).unwrap();
    let mut above = 0;
    for seed in 0..3 {
        let book = generate_codebook(ConstellationSpec::QAM16, k, 500, 5, 50 + seed).unwrap();
        let stats = moment_stats(&book, &pair, None).unwrap();
        for g in default_gamma_grid(k) {
            if stats.jensen_floor(g).unwrap() > stats.report(g).unwrap().upper * (1.0 + 1e-12) {
                above += 1;
            }
        }
    }
    let book = generate_codebook(ConstellationSpec::QAM16, k, 20000, 1, 55).unwrap();
    let stats = moment_stats(&book, &pair, None).unwrap();
    let gamma = 4.0;
    let floor = stats.jensen_floor(gamma).unwrap();
    let kf = k as f64;
    let closed = kf * kf * (2.0 * kf - 1.0) / (book.p_av().powi(2) * gamma * gamma);
    let rel = (floor - closed).abs() / closed;
    report(
        "5 Jensen floor",
        above == 0 && rel < 0.10,
        format!("floor above upper {above} times; M=20000 K=8 floor {floor:.5e} vs closed form {closed:.5e}, rel gap {rel:.3e} (tol 0.10)"),
    );
}

/// Dense `C_k = v_k* v_k` built from the defining exponentials.
fn dense_families(k: usize) -> (Vec<CMatrix>, Vec<CMatrix>) {
    let kf = k as f64;
    let row = |m: usize, half: bool| -> CMatrix {
        CMatrix::from_fn(1, k, |_, n| {
            let phase = if half {
                -2.0 * PI * (m as f64 + 0.5) * n as f64 / kf
            } else {
                -2.0 * PI * (m * n) as f64 / kf
            };
            Complex64::from_polar(1.0 / kf.sqrt(), phase)
        })
    };
    let build = |half: bool| {
        (0..k)
            .map(|m| row(m, half).adjoint() * row(m, half))
            .collect()
    };
    (build(false), build(true))
}

fn quad(x: &CMatrix, a: &CMatrix) -> f64 {
    (x.adjoint() * a * x)[(0, 0)].re
}

fn dense_objective(w: &CMatrix, subset: &[&Codeword], fam: &(Vec<CMatrix>, Vec<CMatrix>)) -> f64 {
    let mut f = 0.0;
    for cw in subset {
        let x = w * CMatrix::from_column_slice(cw.len(), 1, cw.symbols());
        for a in fam.0.iter().chain(&fam.1) {
            f += quad(&x, a).powi(2);
        }
    }
    f
}

fn dense_gradient(
    w: &CMatrix,
    subset: &[&Codeword],
    fam: &(Vec<CMatrix>, Vec<CMatrix>),
) -> CMatrix {
    let k = w.nrows();
    let mut g = CMatrix::zeros(k, k);
    for cw in subset {
        let col = CMatrix::from_column_slice(k, 1, cw.symbols());
        let x = w * &col;
        for a in fam.0.iter().chain(&fam.1) {
            g += (a * &x * col.adjoint()) * c(4.0 * quad(&x, a), 0.0);
        }
    }
    g
}

#[test]
fn criterion_06_gradient_correctness() {
    let k = 4;
    let h = 1e-6;
    let pair = SpectralPair::new(k).unwrap();
    let fam = dense_families(k);
    let book = generate_codebook(ConstellationSpec::QAM16, k, 15, 3, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst_fd = 0.0f64;
    let mut worst_dense = 0.0f64;
    for n in 0..3 {
        let subset = book.subset(n).unwrap();
        let w = random_matrix(k, &mut rng);
        let g = gradient(&w, &subset, &pair).unwrap();
        let gd = dense_gradient(&w, &subset, &fam);
        let scale = gd.iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst_dense = worst_dense.max(max_abs(&g, &gd) / scale);
        for i in 0..k {
            for j in 0..k {
                for (dir, analytic) in [(c(h, 0.0), g[(i, j)].re), (c(0.0, h), g[(i, j)].im)] {
                    let mut plus = w.clone();
                    let mut minus = w.clone();
                    plus[(i, j)] += dir;
                    minus[(i, j)] -= dir;
                    let fd = (dense_objective(&plus, &subset, &fam)
                        - dense_objective(&minus, &subset, &fam))
                        / (2.0 * h);
                    let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs());
                    worst_fd = worst_fd.max(rel);
                }
            }
        }
    }
    report(
        "6 gradient correctness",
        worst_fd < 1e-5 && worst_dense < 1e-10,
        format!("finite-difference rel error {worst_fd:.3e} (tol 1e-5), fast vs dense {worst_dense:.3e} (tol 1e-10)"),
    );
}

#[test]
fn criterion_07_projection_correctness() {
    let k = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut polar_gap, mut unit_err, mut fixed) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let w = random_matrix(k, &mut rng);
        let sym = project_symmetric(&w).unwrap();
        let gs = project_gram_schmidt(&w).unwrap();
        let q = polar_factor(&w);
        polar_gap = polar_gap.max(max_abs(&sym, &q));
        unit_err = unit_err.max(unitarity(&sym)).max(unitarity(&gs));
        fixed = fixed
            .max(max_abs(&project_symmetric(&q).unwrap(), &q))
            .max(max_abs(&project_gram_schmidt(&q).unwrap(), &q));
    }
    report(
        "7 projection correctness",
        polar_gap < 1e-10 && unit_err < 1e-10 && fixed < 1e-10,
        format!("symmetric vs SVD polar {polar_gap:.3e}, unitarity {unit_err:.3e}, fixed points {fixed:.3e} (tol 1e-10)"),
    );
}

fn optimizer_config(n: usize, m: usize, k: usize, iterations: usize) -> OptimizerConfig {
    OptimizerConfig {
        epsilon: StepSize::Auto.resolve(n, m, k),
        max_iters: iterations,
        stop_tol: 0.0,
        projection: Projection::Symmetric,
        snapshot_iters: vec![0, iterations],
    }
}

#[test]
fn criterion_08_optimization_efficacy() {
    let (k, m, n, iters) = (16, 200, 10, 50);
    let book = generate_codebook(ConstellationSpec::QAM16, k, m, n, 8).unwrap();
    let pair = SpectralPair::new(k).unwrap();
    let (_, trace) = optimize(&book, &pair, &optimizer_config(n, m, k, iters)).unwrap();
    let grid = SamplingGrid::new(k, 16).unwrap();
    let med = |it: usize| median(&pmepr_values(&book, trace.snapshot(it), &grid).unwrap());
    let (m0, m50) = (med(0), med(iters));
    let unit = trace
        .records
        .iter()
        .map(|r| r.max_unitarity_error)
        .fold(0.0, f64::max);
    let final_unit = trace.snapshot(iters).unwrap().max_unitarity_error();
    report(
        "8 optimization efficacy",
        trace.records.len() == iters
            && trace.final_objective() < trace.initial_objective
            && m50 < m0
            && unit.max(final_unit) < 1e-8,
        format!(
            "f {:.6e} -> {:.6e}, median PMEPR {m0:.4} -> {m50:.4}, max unitarity error {:.3e} (tol 1e-8)",
            trace.initial_objective,
            trace.final_objective(),
            unit.max(final_unit)
        ),
    );
}

#[test]
fn criterion_09_subset_count_trend() {
    let (k, m, iters) = (16, 400, 50);
    let pair = SpectralPair::new(k).unwrap();
    let final_f = |n: usize| {
        let book = generate_codebook(ConstellationSpec::QAM16, k, m, n, 9).unwrap();
        optimize(&book, &pair, &optimizer_config(n, m, k, iters))
            .unwrap()
            .1
            .final_objective()
    };
    let (f40, f8) = (final_f(40), final_f(8));
    report(
        "9 subset-count trend",
        f40 < f8,
        format!("final f with N=40 {f40:.6e} vs N=8 {f8:.6e}"),
    );
}

fn run_cli(dir: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_unipapr"))
        .args([
            "run", "-k", "8", "-m", "120", "-n", "6", "-j", "8", "--seed", "10",
        ])
        .args([
            "--iterations",
            "5",
            "--snapshots",
            "2",
            "--fresh-eval-seed",
            "11",
            "-o",
        ])
        .arg(dir)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| e.file_name().into_string().unwrap())
        .filter(|name| name != "manifest.toml")
        .map(|name| {
            let bytes = fs::read(dir.join(&name)).unwrap();
            (name, bytes)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_cli(&a);
    run_cli(&b);
    let (fa, fb) = (data_files(&a), data_files(&b));
    let differing: Vec<_> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.clone())
        .collect();
    report(
        "10 determinism",
        fa.len() == fb.len() && !fa.is_empty() && differing.is_empty(),
        format!(
            "{} data files compared, {} differ {differing:?}",
            fa.len(),
            differing.len()
        ),
    );
}
