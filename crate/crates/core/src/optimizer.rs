//! Projected gradient descent over one unitary matrix per codeword subset.
//!
//! Each iteration takes a fixed step along the generalized complex gradient
//! `∂f/∂Re W + j·∂f/∂Im W` of the quartic objective and projects the result
//! back onto the unitary group, either by row-wise Gram–Schmidt or by
//! symmetric decorrelation `(W W*)^{-1/2} W`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{check_ensemble, precode, subset_quartic_total, SpectralPair};
use crate::codebook::{Codebook, Codeword};
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, unitarity_error, CMatrix};

/// One `K×K` unitary matrix per codeword subset.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryEnsemble {
    matrices: Vec<CMatrix>,
}

impl UnitaryEnsemble {
    /// All matrices must be square and of the same size. Unitarity is not
    /// checked here; see [`UnitaryEnsemble::max_unitarity_error`].
    pub fn new(matrices: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::invalid("ensemble must hold at least one matrix"));
        };
        let k = first.nrows();
        for w in &matrices {
            if w.nrows() != k || w.ncols() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: if w.nrows() != k { w.nrows() } else { w.ncols() },
                });
            }
        }
        Ok(Self { matrices })
    }

    pub fn identity(n: usize, k: usize) -> Self {
        Self {
            matrices: vec![CMatrix::identity(k, k); n],
        }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn max_unitarity_error(&self) -> f64 {
        self.matrices
            .iter()
            .map(unitarity_error)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    GramSchmidt,
    #[default]
    Symmetric,
}

impl Projection {
    pub fn apply(self, w: &CMatrix) -> Result<CMatrix> {
        match self {
            Projection::GramSchmidt => project_gram_schmidt(w),
            Projection::Symmetric => project_symmetric(w),
        }
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Projection::GramSchmidt => "gram-schmidt",
            Projection::Symmetric => "symmetric",
        })
    }
}

impl FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "gram-schmidt" | "gs" => Ok(Projection::GramSchmidt),
            "symmetric" | "sym" => Ok(Projection::Symmetric),
            _ => Err(Error::invalid(format!("unknown projection `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Fixed step size.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once every subset moves less than this (Frobenius norm); `0`
    /// always runs `max_iters` iterations.
    pub stop_tol: f64,
    pub projection: Projection,
    /// Completed-iteration counts at which the ensemble is recorded; `0` is
    /// the identity starting point.
    pub snapshot_iters: Vec<usize>,
}

impl OptimizerConfig {
    pub const DEFAULT_STOP_TOL: f64 = 1e-6;

    pub fn new(epsilon: f64, max_iters: usize) -> Self {
        Self {
            epsilon,
            max_iters,
            stop_tol: Self::DEFAULT_STOP_TOL,
            projection: Projection::Symmetric,
            snapshot_iters: Vec::new(),
        }
    }

    /// Step size `N/M · 1/K²`.
    pub fn scaled_step(n: usize, m: usize, k: usize) -> f64 {
        n as f64 / m as f64 / (k * k) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            return Err(Error::invalid(format!(
                "stop_tol must be non-negative, got {}",
                self.stop_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based count of completed iterations.
    pub iteration: usize,
    /// Objective after this iteration's projection.
    pub objective: f64,
    pub max_unitarity_error: f64,
    /// `max_n ‖W_n^{new} - W_n^{old}‖_F`
    pub max_step: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct OptimizerTrace {
    pub initial_objective: f64,
    pub records: Vec<IterationRecord>,
    pub snapshots: Vec<(usize, UnitaryEnsemble)>,
    pub converged: bool,
}

impl OptimizerTrace {
    pub fn final_objective(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_objective, |r| r.objective)
    }

    pub fn snapshot(&self, iteration: usize) -> Option<&UnitaryEnsemble> {
        self.snapshots
            .iter()
            .find(|(i, _)| *i == iteration)
            .map(|(_, e)| e)
    }
}

fn subsets(book: &Codebook) -> Vec<Vec<&Codeword>> {
    (0..book.num_subsets())
        .map(|n| book.subset(n).expect("index in range"))
        .collect()
}

/// `f = Σ_n Σ_{c∈C_n} Σ_k ((c*W_n*C_kW_nc)² + (c*W_n*Ĉ_kW_nc)²)`.
pub fn objective(ensemble: &UnitaryEnsemble, book: &Codebook, pair: &SpectralPair) -> Result<f64> {
    check_ensemble(book, Some(ensemble))?;
    if pair.dim() != book.dim() {
        return Err(Error::DimensionMismatch {
            expected: book.dim(),
            actual: pair.dim(),
        });
    }
    let parts = subsets(book);
    let per_subset: Vec<f64> = parts
        .par_iter()
        .zip(ensemble.matrices().par_iter())
        .map(|(cws, w)| subset_quartic_total(pair, Some(w), cws))
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&per_subset))
}

/// Generalized complex gradient of one subset's share of `f` at `W`:
/// `4·Σ_c [V*(|α|²⊙α) + V̂*(|β|²⊙β)]·c*` with `α = VWc`, `β = V̂Wc`.
pub fn gradient(w: &CMatrix, subset: &[&Codeword], pair: &SpectralPair) -> Result<CMatrix> {
    let k = pair.dim();
    if w.nrows() != k || w.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: w.nrows(),
        });
    }
    if subset.is_empty() {
        return Ok(CMatrix::zeros(k, k));
    }
    let mut directions = CMatrix::zeros(k, subset.len());
    let mut inputs = CMatrix::zeros(k, subset.len());
    for (col, c) in subset.iter().enumerate() {
        let x = precode(c, Some(w))?;
        let mut alpha = pair.alpha(&x)?;
        let mut beta = pair.beta(&x)?;
        alpha.iter_mut().for_each(|z| *z *= z.norm_sqr());
        beta.iter_mut().for_each(|z| *z *= z.norm_sqr());
        let u = pair.alpha_adjoint(&alpha)?;
        let uh = pair.beta_adjoint(&beta)?;
        for i in 0..k {
            directions[(i, col)] = u[i] + uh[i];
        }
        inputs.set_column(col, &DVector::from_column_slice(c.symbols()));
    }
    Ok(directions * inputs.adjoint() * Complex64::new(4.0, 0.0))
}

/// `W - ε·grad`.
pub fn gradient_step(w: &CMatrix, grad: &CMatrix, epsilon: f64) -> CMatrix {
    w - grad * Complex64::new(epsilon, 0.0)
}

const PIVOT_FLOOR: f64 = 1e-12;

/// Orthonormalizes the rows of `w` in order (modified Gram–Schmidt).
pub fn project_gram_schmidt(w: &CMatrix) -> Result<CMatrix> {
    let (rows, cols) = w.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            expected: rows,
            actual: cols,
        });
    }
    let mut out = w.clone();
    for r in 0..rows {
        for prev in 0..r {
            // <w_r, w_prev> with the conjugate on the earlier row
            let coeff: Complex64 = (0..cols).map(|j| out[(r, j)] * out[(prev, j)].conj()).sum();
            for j in 0..cols {
                let sub = coeff * out[(prev, j)];
                out[(r, j)] -= sub;
            }
        }
        let norm = out.row(r).norm();
        if norm < PIVOT_FLOOR {
            return Err(Error::DependentRows { row: r, norm });
        }
        out.row_mut(r).unscale_mut(norm);
    }
    Ok(out)
}

/// `(W W*)^{-1/2}·W`, the unitary polar factor of `w`.
pub fn project_symmetric(w: &CMatrix) -> Result<CMatrix> {
    let (rows, cols) = w.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            expected: rows,
            actual: cols,
        });
    }
    let gram = w * w.adjoint();
    let eig = gram.symmetric_eigen();
    let min_eigenvalue = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eigenvalue.is_nan() || min_eigenvalue <= PIVOT_FLOOR {
        return Err(Error::SingularMatrix { min_eigenvalue });
    }
    let f = &eig.eigenvectors;
    let mut scaled = f.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lambda.sqrt().recip());
    }
    Ok(scaled * f.adjoint() * w)
}

struct SubsetStep {
    w: CMatrix,
    step: f64,
    unitarity: f64,
}

/// Runs the per-subset descent loop from identity starting points until
/// every subset moves less than `stop_tol` or `max_iters` is reached.
pub fn optimize(
    book: &Codebook,
    pair: &SpectralPair,
    config: &OptimizerConfig,
) -> Result<(UnitaryEnsemble, OptimizerTrace)> {
    config.validate()?;
    if pair.dim() != book.dim() {
        return Err(Error::DimensionMismatch {
            expected: book.dim(),
            actual: pair.dim(),
        });
    }
    let parts = subsets(book);
    let mut ensemble = UnitaryEnsemble::identity(parts.len(), book.dim());
    let mut trace = OptimizerTrace {
        initial_objective: objective(&ensemble, book, pair)?,
        ..Default::default()
    };
    if config.snapshot_iters.contains(&0) {
        trace.snapshots.push((0, ensemble.clone()));
    }

    for iteration in 1..=config.max_iters {
        let started = Instant::now();
        let steps: Vec<SubsetStep> = parts
            .par_iter()
            .zip(ensemble.matrices.par_iter())
            .enumerate()
            .map(|(subset, (cws, w))| {
                let grad = gradient(w, cws, pair)?;
                let stepped = gradient_step(w, &grad, config.epsilon);
                let projected =
                    config
                        .projection
                        .apply(&stepped)
                        .map_err(|e| Error::Projection {
                            subset,
                            iteration,
                            source: Box::new(e),
                        })?;
                Ok(SubsetStep {
                    step: (&projected - w).norm(),
                    unitarity: unitarity_error(&projected),
                    w: projected,
                })
            })
            .collect::<Result<_>>()?;

        let max_step = steps.iter().map(|s| s.step).fold(0.0, f64::max);
        let max_unitarity_error = steps.iter().map(|s| s.unitarity).fold(0.0, f64::max);
        ensemble.matrices = steps.into_iter().map(|s| s.w).collect();
        trace.records.push(IterationRecord {
            iteration,
            objective: objective(&ensemble, book, pair)?,
            max_unitarity_error,
            max_step,
            elapsed: started.elapsed(),
        });
        if config.snapshot_iters.contains(&iteration) {
            trace.snapshots.push((iteration, ensemble.clone()));
        }
        if max_step < config.stop_tol {
            trace.converged = true;
            break;
        }
    }
    Ok((ensemble, trace))
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_matrix(k: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(k, k, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Q factor of a random complex matrix.
    pub fn random_unitary(k: usize, seed: u64) -> CMatrix {
        random_matrix(k, seed.wrapping_add(1000)).qr().q()
    }
}
