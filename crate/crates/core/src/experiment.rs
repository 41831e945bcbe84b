//! Empirical PMEPR CCDFs and the end-to-end experiment driver.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{check_ensemble, moment_stats, precode, SpectralPair};
use crate::codebook::{generate_codebook, Codebook, ConstellationSpec};
use crate::error::{Error, Result};
use crate::io;
use crate::optimizer::{optimize, OptimizerConfig, Projection, UnitaryEnsemble};
use crate::signal::{to_db, SamplingGrid};

/// Gradient step: a fixed value, or `N/M · 1/K²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSize {
    #[default]
    Auto,
    Fixed(f64),
}

impl StepSize {
    pub fn resolve(self, n: usize, m: usize, k: usize) -> f64 {
        match self {
            StepSize::Auto => OptimizerConfig::scaled_step(n, m, k),
            StepSize::Fixed(e) => e,
        }
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(e) => write!(f, "{e}"),
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(StepSize::Auto);
        }
        match s.trim().parse::<f64>() {
            Ok(e) if e > 0.0 && e.is_finite() => Ok(StepSize::Fixed(e)),
            _ => Err(Error::invalid(format!(
                "epsilon must be `auto` or a positive number, got `{s}`"
            ))),
        }
    }
}

impl Serialize for StepSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `points` thresholds evenly spaced on `[lo, hi]` (linear scale).
pub fn linear_gamma_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(Error::invalid(format!(
            "gamma grid needs 0 < lo < hi and at least 2 points (got {lo}, {hi}, {points})"
        )));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

/// 40 points from 2 to `K` (to 3 when `K < 3`).
pub fn default_gamma_grid(k: usize) -> Vec<f64> {
    linear_gamma_grid(2.0, (k as f64).max(3.0), 40).expect("valid default grid")
}

pub fn validate_gamma_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("gamma grid is empty"));
    }
    if grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::invalid("gamma values must be positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("gamma grid must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// Oversampling factor for PMEPR measurement.
    pub j: usize,
    pub constellation: ConstellationSpec,
    pub seed: u64,
    pub epsilon: StepSize,
    pub iterations: usize,
    pub snapshot_iters: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    pub projection: Projection,
    pub stop_tol: f64,
    pub output_dir: PathBuf,
    /// When set, CCDFs are also measured on an independent codebook drawn
    /// with this seed, precoded with the trained ensemble.
    pub fresh_eval_seed: Option<u64>,
}

impl ExperimentConfig {
    /// Full-size configuration: K = 128, M = 2000, J = 16, 16-QAM,
    /// `ε = N/M · 1/K²`.
    pub fn full_scale(n: usize, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self::new(128, 2000, n, seed, output_dir)
    }

    pub fn new(k: usize, m: usize, n: usize, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            k,
            m,
            n,
            j: 16,
            constellation: ConstellationSpec::QAM16,
            seed,
            epsilon: StepSize::Auto,
            iterations: 50,
            snapshot_iters: Vec::new(),
            gamma_grid: default_gamma_grid(k),
            projection: Projection::Symmetric,
            stop_tol: OptimizerConfig::DEFAULT_STOP_TOL,
            output_dir: output_dir.into(),
            fresh_eval_seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.n == 0 || self.j == 0 {
            return Err(Error::invalid("K, M, N and J must be at least 1"));
        }
        if !self.m.is_multiple_of(self.n) {
            return Err(Error::invalid(format!(
                "N = {} does not divide M = {}",
                self.n, self.m
            )));
        }
        validate_gamma_grid(&self.gamma_grid)?;
        self.optimizer_config().validate()
    }

    pub fn step_size(&self) -> f64 {
        self.epsilon.resolve(self.n, self.m, self.k)
    }

    /// Snapshot iterations including the start (0) and the last iteration.
    pub fn snapshots(&self) -> Vec<usize> {
        let mut set: BTreeSet<usize> = self
            .snapshot_iters
            .iter()
            .copied()
            .filter(|&i| i <= self.iterations)
            .collect();
        set.insert(0);
        set.insert(self.iterations);
        set.into_iter().collect()
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            epsilon: self.step_size(),
            max_iters: self.iterations,
            stop_tol: self.stop_tol,
            projection: self.projection,
            snapshot_iters: self.snapshots(),
        }
    }
}

/// Empirical `Pr(PMEPR > γ)` over a codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct CcdfCurve {
    pub iteration: Option<usize>,
    pub gamma: Vec<f64>,
    pub gamma_db: Vec<f64>,
    pub probability: Vec<f64>,
}

impl CcdfCurve {
    /// Exceedance fractions of `values` at each threshold.
    pub fn from_values(values: &[f64], gamma_grid: &[f64]) -> Result<Self> {
        validate_gamma_grid(gamma_grid)?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total = sorted.len().max(1) as f64;
        let probability = gamma_grid
            .iter()
            .map(|g| {
                let at_or_below = sorted.partition_point(|v| v <= g);
                (sorted.len() - at_or_below) as f64 / total
            })
            .collect();
        Ok(Self {
            iteration: None,
            gamma: gamma_grid.to_vec(),
            gamma_db: gamma_grid.iter().map(|&g| to_db(g)).collect(),
            probability,
        })
    }

    pub fn with_iteration(mut self, iteration: usize) -> Self {
        self.iteration = Some(iteration);
        self
    }
}

/// PMEPR of every codeword after precoding with its subset's matrix.
pub fn pmepr_values(
    book: &Codebook,
    ensemble: Option<&UnitaryEnsemble>,
    grid: &SamplingGrid,
) -> Result<Vec<f64>> {
    check_ensemble(book, ensemble)?;
    if grid.dim() != book.dim() {
        return Err(Error::DimensionMismatch {
            expected: book.dim(),
            actual: grid.dim(),
        });
    }
    let owner = book.subset_of_each();
    let p_av = book.p_av();
    book.codewords()
        .par_iter()
        .zip(owner.par_iter())
        .map(|(c, &n)| {
            let x = precode(c, ensemble.map(|e| &e.matrices()[n]))?;
            Ok(grid.peak_of(&x)? / p_av)
        })
        .collect()
}

pub fn empirical_ccdf(
    book: &Codebook,
    ensemble: Option<&UnitaryEnsemble>,
    j: usize,
    gamma_grid: &[f64],
) -> Result<CcdfCurve> {
    validate_gamma_grid(gamma_grid)?;
    let grid = SamplingGrid::new(book.dim(), j)?;
    CcdfCurve::from_values(&pmepr_values(book, ensemble, &grid)?, gamma_grid)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotSummary {
    pub iteration: usize,
    pub objective: f64,
    pub median_pmepr: f64,
    pub max_pmepr: f64,
    pub max_unitarity_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub epsilon: f64,
    pub p_av: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub snapshots: Vec<SnapshotSummary>,
    /// Data files written, relative to the output directory.
    pub files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: String,
    created_unix: u64,
    config: &'a ExperimentConfig,
    summary: &'a ExperimentSummary,
}

fn version_string() -> String {
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string());
    match git {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn file(
        &mut self,
        name: String,
        body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
    ) -> Result<()> {
        io::write_file(&self.dir.join(&name), body)?;
        self.files.push(name);
        Ok(())
    }
}

/// Generates the codebook, runs the optimizer and writes every artifact to
/// `config.output_dir`. Data files depend only on the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let dir = config.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let book = generate_codebook(
        config.constellation,
        config.k,
        config.m,
        config.n,
        config.seed,
    )?;
    let pair = SpectralPair::new(config.k)?;
    let grid = SamplingGrid::new(config.k, config.j)?;
    let opt = config.optimizer_config();
    let (final_ensemble, trace) = optimize(&book, &pair, &opt)?;

    let fresh = config
        .fresh_eval_seed
        .map(|s| generate_codebook(config.constellation, config.k, config.m, config.n, s))
        .transpose()?;

    let mut out = Writer {
        dir,
        files: Vec::new(),
    };
    out.file("codebook.csv".into(), |o| io::write_codebook(&book, o))?;
    out.file("trace.csv".into(), |o| io::write_trace(&trace, o))?;

    let identity_stats = moment_stats(&book, &pair, None)?;
    let identity_sweep = identity_stats.sweep(&config.gamma_grid)?;
    out.file("bound_identity.csv".into(), |o| {
        io::write_bound_sweep(&identity_sweep, o)
    })?;

    let mut snapshots = Vec::new();
    let mut evaluate = |label: String,
                        iteration: usize,
                        ensemble: &UnitaryEnsemble,
                        out: &mut Writer|
     -> Result<()> {
        let values = pmepr_values(&book, Some(ensemble), &grid)?;
        let curve = CcdfCurve::from_values(&values, &config.gamma_grid)?.with_iteration(iteration);
        let stats = moment_stats(&book, &pair, Some(ensemble))?;
        let sweep = stats.sweep(&config.gamma_grid)?;
        out.file(format!("ensemble_{label}.csv"), |o| {
            io::write_ensemble(ensemble, o)
        })?;
        out.file(format!("ccdf_{label}.csv"), |o| io::write_ccdf(&curve, o))?;
        out.file(format!("bound_{label}.csv"), |o| {
            io::write_bound_sweep(&sweep, o)
        })?;
        if let Some(fresh) = &fresh {
            let curve = CcdfCurve::from_values(
                &pmepr_values(fresh, Some(ensemble), &grid)?,
                &config.gamma_grid,
            )?
            .with_iteration(iteration);
            out.file(format!("ccdf_fresh_{label}.csv"), |o| {
                io::write_ccdf(&curve, o)
            })?;
        }
        snapshots.push(SnapshotSummary {
            iteration,
            objective: stats.quartic_total,
            median_pmepr: median(&values),
            max_pmepr: values.iter().copied().fold(0.0, f64::max),
            max_unitarity_error: ensemble.max_unitarity_error(),
        });
        Ok(())
    };
    for (iteration, ensemble) in &trace.snapshots {
        evaluate(
            format!("iter{iteration:04}"),
            *iteration,
            ensemble,
            &mut out,
        )?;
    }
    let iterations_run = trace.records.len();
    evaluate("final".into(), iterations_run, &final_ensemble, &mut out)?;

    let summary = ExperimentSummary {
        epsilon: opt.epsilon,
        p_av: book.p_av(),
        initial_objective: trace.initial_objective,
        final_objective: trace.final_objective(),
        iterations_run,
        converged: trace.converged,
        snapshots,
        files: out.files.clone(),
    };
    write_manifest(dir, config, &summary)?;
    Ok(summary)
}

fn write_manifest(
    dir: &Path,
    config: &ExperimentConfig,
    summary: &ExperimentSummary,
) -> Result<()> {
    let manifest = Manifest {
        version: version_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config,
        summary,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::invalid(format!("manifest: {e}")))?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
