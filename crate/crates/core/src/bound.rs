//! Quartic-moment bound on the PMEPR tail.
//!
//! The cyclic shift `B(k)` and the negacyclic shift `B̂(k)` are diagonalized
//! by the DFT `V` and the half-bin shifted DFT `V̂`:
//!
//! ```text
//! V[m][n]  = exp(-2πj·mn/K) / √K          D(k)[n]  = exp(-2πj·kn/K)
//! V̂[m][n]  = exp(-2πj·n(m/K + 1/2K)) / √K  D̂(k)[n]  = exp(-2πj·k(n/K + 1/2K))
//! ```
//!
//! with 0-based indices. The quadratic forms `c*·C_k·c` and `c*·Ĉ_k·c`
//! reduce to `|α_k|²` and `|β_k|²` for `α = Vc`, `β = V̂c`, so the production
//! path only ever runs FFTs.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::codebook::{Codebook, Codeword};
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, rel_diff, CMatrix};
use crate::optimizer::UnitaryEnsemble;
use crate::signal::{aperiodic_autocorr, check_p_av};

/// `exp(-2πj·num/den)`, with `num` already reduced modulo `den`.
fn root(num: usize, den: usize) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * num as f64 / den as f64)
}

/// The DFT pair `V`, `V̂` and their eigenvalue families.
#[derive(Clone)]
pub struct SpectralPair {
    k: usize,
    v: CMatrix,
    v_hat: CMatrix,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// `exp(-πj·n/K)`
    half_shift: Vec<Complex64>,
    scale: f64,
}

impl fmt::Debug for SpectralPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralPair").field("k", &self.k).finish()
    }
}

impl SpectralPair {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        let scale = 1.0 / (k as f64).sqrt();
        let v = CMatrix::from_fn(k, k, |m, n| root(m * n % k, k) * scale);
        let v_hat = CMatrix::from_fn(k, k, |m, n| root(n * (2 * m + 1) % (2 * k), 2 * k) * scale);
        let mut planner = FftPlanner::new();
        Ok(Self {
            k,
            v,
            v_hat,
            fft: planner.plan_fft_forward(k),
            ifft: planner.plan_fft_inverse(k),
            half_shift: (0..k).map(|n| root(n, 2 * k)).collect(),
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// Dense `V`.
    pub fn v(&self) -> &CMatrix {
        &self.v
    }

    /// Dense `V̂`.
    pub fn v_hat(&self) -> &CMatrix {
        &self.v_hat
    }

    /// Diagonal of `D(k)`.
    pub fn d(&self, k: usize) -> Vec<Complex64> {
        (0..self.k).map(|n| root(k * n % self.k, self.k)).collect()
    }

    /// Diagonal of `D̂(k)`.
    pub fn d_hat(&self, k: usize) -> Vec<Complex64> {
        let den = 2 * self.k;
        (0..self.k)
            .map(|n| root(k * (2 * n + 1) % den, den))
            .collect()
    }

    /// Replaces the dense `V̂` by its complex conjugate (the opposite exponent
    /// sign). The FFT path is untouched. Only used for fault injection in the
    /// verification suite.
    #[doc(hidden)]
    pub fn with_flipped_vhat_sign(mut self) -> Self {
        self.v_hat = self.v_hat.map(|z| z.conj());
        self
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.k {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.k,
                actual: len,
            })
        }
    }

    /// `α = V·x`.
    pub fn alpha(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let mut buf = x.to_vec();
        self.fft.process(&mut buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
        Ok(buf)
    }

    /// `β = V̂·x`.
    pub fn beta(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let mut buf: Vec<Complex64> = x.iter().zip(&self.half_shift).map(|(a, p)| a * p).collect();
        self.fft.process(&mut buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
        Ok(buf)
    }

    /// `V*·y`.
    pub fn alpha_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y.len())?;
        let mut buf = y.to_vec();
        self.ifft.process(&mut buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
        Ok(buf)
    }

    /// `V̂*·y`.
    pub fn beta_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y.len())?;
        let mut buf = y.to_vec();
        self.ifft.process(&mut buf);
        for (z, p) in buf.iter_mut().zip(&self.half_shift) {
            *z *= p.conj() * self.scale;
        }
        Ok(buf)
    }
}

pub fn build_spectral_pair(k: usize) -> Result<SpectralPair> {
    SpectralPair::new(k)
}

fn fourth_power_sum(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr() * z.norm_sqr()).sum()
}

/// `W·c`, or `c` when no matrix is given.
pub(crate) fn precode(c: &Codeword, w: Option<&CMatrix>) -> Result<Vec<Complex64>> {
    match w {
        None => Ok(c.symbols().to_vec()),
        Some(w) => {
            if w.nrows() != c.len() || w.ncols() != c.len() {
                return Err(Error::DimensionMismatch {
                    expected: c.len(),
                    actual: w.nrows().max(w.ncols()),
                });
            }
            Ok((w * DVector::from_column_slice(c.symbols())).data.into())
        }
    }
}

/// `(Σ_k |α_k|⁴, Σ_k |β_k|⁴)` for `α = V·W·c`, `β = V̂·W·c`; `W` defaults
/// to the identity.
pub fn quartic_sums(c: &Codeword, pair: &SpectralPair, w: Option<&CMatrix>) -> Result<(f64, f64)> {
    pair.check_len(c.len())?;
    let x = precode(c, w)?;
    Ok((
        fourth_power_sum(&pair.alpha(&x)?),
        fourth_power_sum(&pair.beta(&x)?),
    ))
}

/// `K(2K-1)/2`, the constant in front of the quartic sums.
pub fn quartic_prefactor(k: usize) -> f64 {
    let k = k as f64;
    k * (2.0 * k - 1.0) / 2.0
}

/// Upper bound on `PMEPR(c)` from the quartic sums:
/// `sqrt(K(2K-1)/(2·p_av²)·(Σ|α|⁴ + Σ|β|⁴))`.
pub fn codeword_papr_bound(c: &Codeword, pair: &SpectralPair, p_av: f64) -> Result<f64> {
    check_p_av(p_av)?;
    let (sa, sb) = quartic_sums(c, pair, None)?;
    Ok((quartic_prefactor(c.len()) * (sa + sb)).sqrt() / p_av)
}

/// The three equal forms of the squared-peak bound for one codeword.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionForms {
    /// `(2K-1)·(|ρ(0)|² + 2·Σ_{i≥1} |ρ(i)|²)`
    pub autocorr: f64,
    /// `(2K-1)/2·Σ_k (|ρ(k) + conj ρ(K-k)|² + |ρ(k) - conj ρ(K-k)|²)`
    pub periodic: f64,
    /// `K(2K-1)/2·(Σ|α|⁴ + Σ|β|⁴)`
    pub quartic: f64,
}

impl ExpansionForms {
    pub fn max_rel_discrepancy(&self) -> f64 {
        rel_diff(self.autocorr, self.periodic)
            .max(rel_diff(self.autocorr, self.quartic))
            .max(rel_diff(self.periodic, self.quartic))
    }
}

pub fn expansion_forms(c: &Codeword, pair: &SpectralPair) -> Result<ExpansionForms> {
    pair.check_len(c.len())?;
    let k = c.len();
    let factor = (2 * k - 1) as f64;
    let profile = aperiodic_autocorr(c);
    let rho = profile.rho();
    let autocorr =
        factor * (rho[0].norm_sqr() + 2.0 * rho[1..].iter().map(|z| z.norm_sqr()).sum::<f64>());
    let periodic = factor / 2.0
        * (0..k)
            .map(|i| {
                let tail = profile.at(k - i).conj();
                (rho[i] + tail).norm_sqr() + (rho[i] - tail).norm_sqr()
            })
            .sum::<f64>();
    let (sa, sb) = quartic_sums(c, pair, None)?;
    Ok(ExpansionForms {
        autocorr,
        periodic,
        quartic: quartic_prefactor(k) * (sa + sb),
    })
}

/// Largest relative disagreement among the three forms of the identity.
pub fn expansion_identity_check(c: &Codeword, pair: &SpectralPair) -> Result<f64> {
    Ok(expansion_forms(c, pair)?.max_rel_discrepancy())
}

/// Moment bound evaluated at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub gamma: f64,
    /// Markov upper bound on `Pr(PMEPR > γ)`; not clipped to 1.
    pub upper: f64,
    /// `K²(2K-1)/(p_av²·γ²)`, the unitary-invariant floor under `E{cc*} = I`.
    pub lower: f64,
    /// `Σ_n Σ_{c∈C_n} Σ_k (|α_k|⁴ + |β_k|⁴)`
    pub quartic_total: f64,
}

/// Codebook-level sums that do not depend on `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub k: usize,
    pub m: usize,
    pub p_av: f64,
    /// Same value as the optimizer objective for the ensemble in use.
    pub quartic_total: f64,
    /// `Σ_n |C_n|·Σ_k (tr(C_k·W g W*)² + tr(Ĉ_k·W g W*)²)` with `g = g(C_n)`.
    pub floor_total: f64,
    /// Per-subset contribution to `quartic_total`.
    pub per_subset: Vec<f64>,
}

impl MomentStats {
    fn scale(&self, gamma: f64) -> f64 {
        quartic_prefactor(self.k) / (self.m as f64 * self.p_av * self.p_av * gamma * gamma)
    }

    pub fn report(&self, gamma: f64) -> Result<BoundReport> {
        check_gamma(gamma)?;
        let k = self.k as f64;
        Ok(BoundReport {
            gamma,
            upper: self.scale(gamma) * self.quartic_total,
            lower: k * k * (2.0 * k - 1.0) / (self.p_av * self.p_av * gamma * gamma),
            quartic_total: self.quartic_total,
        })
    }

    /// Jensen floor weighted by the subsets' sample second moments. Never
    /// exceeds `report(γ).upper`.
    pub fn jensen_floor(&self, gamma: f64) -> Result<f64> {
        check_gamma(gamma)?;
        Ok(self.scale(gamma) * self.floor_total)
    }

    pub fn sweep(&self, gammas: &[f64]) -> Result<Vec<BoundReport>> {
        gammas.iter().map(|&g| self.report(g)).collect()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )))
    }
}

struct SubsetMoments {
    quartic: f64,
    floor: f64,
}

fn subset_moments(
    pair: &SpectralPair,
    w: Option<&CMatrix>,
    codewords: &[&Codeword],
) -> Result<SubsetMoments> {
    let k = pair.dim();
    let per_codeword: Vec<(f64, Vec<f64>, Vec<f64>)> = codewords
        .par_iter()
        .map(|c| {
            let x = precode(c, w)?;
            let alpha = pair.alpha(&x)?;
            let beta = pair.beta(&x)?;
            let a2: Vec<f64> = alpha.iter().map(|z| z.norm_sqr()).collect();
            let b2: Vec<f64> = beta.iter().map(|z| z.norm_sqr()).collect();
            let q = a2.iter().chain(&b2).map(|p| p * p).sum();
            Ok((q, a2, b2))
        })
        .collect::<Result<_>>()?;
    let quartic = pairwise_sum(&per_codeword.iter().map(|t| t.0).collect::<Vec<_>>());
    if codewords.is_empty() {
        return Ok(SubsetMoments {
            quartic,
            floor: 0.0,
        });
    }
    let size = codewords.len() as f64;
    let mut mean_a = vec![0.0; k];
    let mut mean_b = vec![0.0; k];
    for (_, a2, b2) in &per_codeword {
        for i in 0..k {
            mean_a[i] += a2[i];
            mean_b[i] += b2[i];
        }
    }
    let floor = size
        * mean_a
            .iter()
            .chain(&mean_b)
            .map(|s| (s / size) * (s / size))
            .sum::<f64>();
    Ok(SubsetMoments { quartic, floor })
}

/// `Σ_{c∈subset} Σ_k (|(V W c)_k|⁴ + |(V̂ W c)_k|⁴)`.
pub fn subset_quartic_total(
    pair: &SpectralPair,
    w: Option<&CMatrix>,
    codewords: &[&Codeword],
) -> Result<f64> {
    Ok(subset_moments(pair, w, codewords)?.quartic)
}

pub(crate) fn check_ensemble(book: &Codebook, ensemble: Option<&UnitaryEnsemble>) -> Result<()> {
    if let Some(e) = ensemble {
        if e.len() != book.num_subsets() {
            return Err(Error::EnsembleMismatch {
                ensemble: e.len(),
                subsets: book.num_subsets(),
            });
        }
        if let Some(bad) = e
            .matrices()
            .iter()
            .find(|w| w.nrows() != book.dim() || w.ncols() != book.dim())
        {
            return Err(Error::DimensionMismatch {
                expected: book.dim(),
                actual: bad.nrows(),
            });
        }
    }
    Ok(())
}

/// Quartic and floor totals over the codebook, each subset precoded by its
/// ensemble matrix (identity when `ensemble` is `None`).
pub fn moment_stats(
    book: &Codebook,
    pair: &SpectralPair,
    ensemble: Option<&UnitaryEnsemble>,
) -> Result<MomentStats> {
    pair.check_len(book.dim())?;
    check_ensemble(book, ensemble)?;
    check_p_av(book.p_av())?;
    let moments: Vec<SubsetMoments> = (0..book.num_subsets())
        .into_par_iter()
        .map(|n| {
            let w = ensemble.map(|e| &e.matrices()[n]);
            subset_moments(pair, w, &book.subset(n)?)
        })
        .collect::<Result<_>>()?;
    let per_subset: Vec<f64> = moments.iter().map(|s| s.quartic).collect();
    Ok(MomentStats {
        k: book.dim(),
        m: book.len(),
        p_av: book.p_av(),
        quartic_total: pairwise_sum(&per_subset),
        floor_total: pairwise_sum(&moments.iter().map(|s| s.floor).collect::<Vec<_>>()),
        per_subset,
    })
}

/// Markov bound on the PMEPR CCDF of a uniformly drawn codeword, with each
/// subset precoded by its ensemble matrix.
pub fn ccdf_upper_bound(
    book: &Codebook,
    pair: &SpectralPair,
    ensemble: Option<&UnitaryEnsemble>,
    gamma: f64,
) -> Result<BoundReport> {
    check_gamma(gamma)?;
    moment_stats(book, pair, ensemble)?.report(gamma)
}

/// `g(C_n) = (1/|C_n|)·Σ_{c∈C_n} c·c*`. Zero for an empty subset.
pub fn sample_second_moment(book: &Codebook, n: usize) -> Result<CMatrix> {
    let subset = book.subset(n)?;
    let k = book.dim();
    let mut g = CMatrix::zeros(k, k);
    if subset.is_empty() {
        return Ok(g);
    }
    for c in &subset {
        let col = DVector::from_column_slice(c.symbols());
        g += &col * col.adjoint();
    }
    Ok(g / Complex64::new(subset.len() as f64, 0.0))
}
