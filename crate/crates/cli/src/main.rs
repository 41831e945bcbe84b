use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use unipapr_core::experiment::{default_gamma_grid, linear_gamma_grid, median, pmepr_values};
use unipapr_core::io;
use unipapr_core::verify::{Fault, VerifyOptions};
use unipapr_core::{
    empirical_ccdf, generate_codebook, moment_stats, optimize, run_experiment, verify_suite,
    ConstellationSpec, ExperimentConfig, OptimizerConfig, Projection, SamplingGrid, SpectralPair,
    StepSize,
};

#[derive(Parser)]
#[command(
    name = "unipapr",
    version,
    about = "Quartic-moment PMEPR bounds and unitary precoder search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random codebook and write it as CSV.
    Generate(GenerateArgs),
    /// Sweep the moment bound over a range of thresholds.
    Bound(BoundArgs),
    /// Run the projected gradient descent and write ensembles and trace.
    Optimize(OptimizeArgs),
    /// Empirical PMEPR CCDF of a codebook, optionally precoded.
    Ccdf(CcdfArgs),
    /// Check the numerical invariants on random instances.
    Verify(VerifyArgs),
    /// Full experiment: generate, optimize, measure, write everything.
    Run(RunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short = 'k', long, default_value_t = 128)]
    k: usize,
    #[arg(short = 'm', long, default_value_t = 2000)]
    m: usize,
    #[arg(short = 'n', long, default_value_t = 50)]
    n: usize,
    /// qam16, qam4 or bpsk; append `-raw` to skip unit-energy scaling.
    #[arg(long, default_value = "qam16")]
    constellation: ConstellationSpec,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct GammaArgs {
    /// Explicit comma-separated thresholds (linear scale).
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["gamma_min", "gamma_max"])]
    gamma_grid: Option<Vec<f64>>,
    #[arg(long)]
    gamma_min: Option<f64>,
    /// Defaults to K.
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long, default_value_t = 40)]
    gamma_points: usize,
}

impl GammaArgs {
    fn resolve(&self, k: usize) -> Result<Vec<f64>> {
        if let Some(g) = &self.gamma_grid {
            return Ok(g.clone());
        }
        if self.gamma_min.is_none() && self.gamma_max.is_none() && self.gamma_points == 40 {
            return Ok(default_gamma_grid(k));
        }
        let lo = self.gamma_min.unwrap_or(2.0);
        let hi = self.gamma_max.unwrap_or((k as f64).max(lo + 1.0));
        Ok(linear_gamma_grid(lo, hi, self.gamma_points)?)
    }
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[command(flatten)]
    gamma: GammaArgs,
    /// Output CSV; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    codebook: PathBuf,
    /// Step size, or `auto` for N/M·1/K².
    #[arg(long, default_value = "auto")]
    epsilon: StepSize,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, default_value_t = OptimizerConfig::DEFAULT_STOP_TOL)]
    stop_tol: f64,
    #[arg(long, default_value = "symmetric")]
    projection: Projection,
    /// Iterations at which to save the ensemble (0 = identity start).
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CcdfArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(short = 'j', long, default_value_t = 16)]
    j: usize,
    #[command(flatten)]
    gamma: GammaArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long = "k", value_delimiter = ',', default_values_t = [1usize, 4, 8, 32])]
    k_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    seeds: Vec<u64>,
    /// Deliberately corrupt part of the machinery (`vhat-sign`).
    #[arg(long)]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(short = 'k', long, default_value_t = 128)]
    k: usize,
    #[arg(short = 'm', long, default_value_t = 2000)]
    m: usize,
    #[arg(short = 'n', long, default_value_t = 50)]
    n: usize,
    #[arg(short = 'j', long, default_value_t = 16)]
    j: usize,
    #[arg(long, default_value = "qam16")]
    constellation: ConstellationSpec,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "auto")]
    epsilon: StepSize,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<usize>,
    #[command(flatten)]
    gamma: GammaArgs,
    #[arg(long, default_value = "symmetric")]
    projection: Projection,
    #[arg(long, default_value_t = OptimizerConfig::DEFAULT_STOP_TOL)]
    stop_tol: f64,
    /// Also measure CCDFs on a fresh codebook drawn with this seed.
    #[arg(long)]
    fresh_eval_seed: Option<u64>,
    #[arg(short, long)]
    output_dir: PathBuf,
}

fn emit(
    out: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    match out {
        Some(path) => {
            io::write_file(path, |w| body(w))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
        }
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let book = generate_codebook(a.constellation, a.k, a.m, a.n, a.seed)?;
    io::write_file(&a.out, |w| io::write_codebook(&book, w))?;
    eprintln!(
        "wrote {} ({} codewords, K = {}, {} subsets, p_av = {:.6})",
        a.out.display(),
        book.len(),
        book.dim(),
        book.num_subsets(),
        book.p_av()
    );
    Ok(())
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let book = io::read_codebook(&a.codebook)?;
    let ensemble = a.ensemble.as_deref().map(io::read_ensemble).transpose()?;
    let pair = SpectralPair::new(book.dim())?;
    let stats = moment_stats(&book, &pair, ensemble.as_ref())?;
    let rows = stats.sweep(&a.gamma.resolve(book.dim())?)?;
    emit(a.out.as_deref(), |w| io::write_bound_sweep(&rows, w))
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let book = io::read_codebook(&a.codebook)?;
    let pair = SpectralPair::new(book.dim())?;
    let mut snapshots = a.snapshots.clone();
    snapshots.push(0);
    let config = OptimizerConfig {
        epsilon: a
            .epsilon
            .resolve(book.num_subsets(), book.len(), book.dim()),
        max_iters: a.iterations,
        stop_tol: a.stop_tol,
        projection: a.projection,
        snapshot_iters: snapshots,
    };
    let (ensemble, trace) = optimize(&book, &pair, &config)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
    for (i, e) in &trace.snapshots {
        io::write_file(&a.out_dir.join(format!("ensemble_iter{i:04}.csv")), |w| {
            io::write_ensemble(e, w)
        })?;
    }
    io::write_file(&a.out_dir.join("ensemble_final.csv"), |w| {
        io::write_ensemble(&ensemble, w)
    })?;
    io::write_file(&a.out_dir.join("trace.csv"), |w| io::write_trace(&trace, w))?;
    eprintln!(
        "epsilon {:.3e}: f {:.6e} -> {:.6e} after {} iterations{}",
        config.epsilon,
        trace.initial_objective,
        trace.final_objective(),
        trace.records.len(),
        if trace.converged { " (converged)" } else { "" }
    );
    Ok(())
}

fn cmd_ccdf(a: CcdfArgs) -> Result<()> {
    let book = io::read_codebook(&a.codebook)?;
    let ensemble = a.ensemble.as_deref().map(io::read_ensemble).transpose()?;
    let gammas = a.gamma.resolve(book.dim())?;
    let curve = empirical_ccdf(&book, ensemble.as_ref(), a.j, &gammas)?;
    let values = pmepr_values(
        &book,
        ensemble.as_ref(),
        &SamplingGrid::new(book.dim(), a.j)?,
    )?;
    eprintln!("median PMEPR {:.4}", median(&values));
    emit(a.out.as_deref(), |w| io::write_ccdf(&curve, w))
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let fault = match a.inject_fault.as_deref() {
        None => None,
        Some("vhat-sign") => Some(Fault::FlipVhatSign),
        Some(other) => bail!("unknown fault `{other}` (expected `vhat-sign`)"),
    };
    let report = verify_suite(&VerifyOptions {
        k_values: a.k_values,
        seeds: a.seeds,
        fault,
    })?;
    for check in &report.checks {
        println!("{check}");
    }
    if !report.passed() {
        for check in report.checks.iter().filter(|c| !c.passed) {
            eprintln!(
                "invariant violated: {} (worst {:e} > {:e})",
                check.name, check.worst, check.tolerance
            );
        }
    }
    Ok(report.passed())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let gamma_grid = a.gamma.resolve(a.k)?;
    let config = ExperimentConfig {
        k: a.k,
        m: a.m,
        n: a.n,
        j: a.j,
        constellation: a.constellation,
        seed: a.seed,
        epsilon: a.epsilon,
        iterations: a.iterations,
        snapshot_iters: a.snapshots,
        gamma_grid,
        projection: a.projection,
        stop_tol: a.stop_tol,
        output_dir: a.output_dir,
        fresh_eval_seed: a.fresh_eval_seed,
    };
    let summary = run_experiment(&config)?;
    println!("iteration,objective,median_pmepr,median_pmepr_db,max_pmepr");
    for s in &summary.snapshots {
        println!(
            "{},{:.6e},{:.4},{:.3},{:.4}",
            s.iteration,
            s.objective,
            s.median_pmepr,
            10.0 * s.median_pmepr.log10(),
            s.max_pmepr
        );
    }
    eprintln!(
        "wrote {} files to {}",
        summary.files.len() + 1,
        config.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| true),
        Command::Bound(a) => cmd_bound(a).map(|_| true),
        Command::Optimize(a) => cmd_optimize(a).map(|_| true),
        Command::Ccdf(a) => cmd_ccdf(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Run(a) => cmd_run(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
