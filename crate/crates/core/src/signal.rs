//! Baseband OFDM envelope, oversampled peak power and aperiodic
//! autocorrelation.
//!
//! The symbol duration is normalized to 1, so subcarrier `k` (0-based)
//! oscillates at `exp(2πj·k·t)` for `t ∈ [0, 1)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::codebook::{codeword_power, Codeword};
use crate::error::{Error, Result};

/// `s(t) = Σ_k A_k exp(2πj·k·t)` by direct summation.
pub fn baseband_sample(c: &Codeword, t: f64) -> Result<Complex64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    Ok(c.symbols()
        .iter()
        .enumerate()
        .map(|(k, a)| a * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * t))
        .sum())
}

/// Uniform time grid `t_i = i/(JK)`, `i = 0..JK`, evaluated with one
/// zero-padded inverse FFT of length `JK`.
#[derive(Clone)]
pub struct SamplingGrid {
    k: usize,
    j: usize,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SamplingGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SamplingGrid")
            .field("k", &self.k)
            .field("j", &self.j)
            .finish()
    }
}

impl SamplingGrid {
    pub fn new(k: usize, j: usize) -> Result<Self> {
        if k == 0 || j == 0 {
            return Err(Error::invalid("K and J must be at least 1"));
        }
        let ifft = FftPlanner::new().plan_fft_inverse(j * k);
        Ok(Self { k, j, ifft })
    }

    pub fn oversampling(&self) -> usize {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.j * self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.len() as f64;
        (0..self.len()).map(move |i| i as f64 / n)
    }

    /// `s(t_i)` for every grid point.
    pub fn signal(&self, c: &Codeword) -> Result<Vec<Complex64>> {
        self.signal_of(c.symbols())
    }

    pub(crate) fn signal_of(&self, symbols: &[Complex64]) -> Result<Vec<Complex64>> {
        if symbols.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                actual: symbols.len(),
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len()];
        buf[..self.k].copy_from_slice(symbols);
        self.ifft.process(&mut buf);
        Ok(buf)
    }

    pub(crate) fn peak_of(&self, symbols: &[Complex64]) -> Result<f64> {
        Ok(self
            .signal_of(symbols)?
            .iter()
            .map(|z| z.norm_sqr())
            .fold(0.0, f64::max))
    }
}

/// `max_i |s(t_i)|²` over the grid.
pub fn peak_envelope_power(c: &Codeword, grid: &SamplingGrid) -> Result<f64> {
    grid.peak_of(c.symbols())
}

/// Peak-to-mean envelope power ratio (linear scale).
pub fn pmepr(c: &Codeword, grid: &SamplingGrid, p_av: f64) -> Result<f64> {
    check_p_av(p_av)?;
    Ok(peak_envelope_power(c, grid)? / p_av)
}

pub(crate) fn check_p_av(p_av: f64) -> Result<()> {
    if p_av > 0.0 && p_av.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("p_av must be positive, got {p_av}")))
    }
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Aperiodic autocorrelation `ρ(i) = Σ_k A_k·conj(A_{k+i})`, `i = 0..K`.
/// `ρ(K)` is zero and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrProfile {
    rho: Vec<Complex64>,
}

impl AutocorrProfile {
    pub fn rho(&self) -> &[Complex64] {
        &self.rho
    }

    /// `ρ(i)` with the convention `ρ(i) = 0` for `i ≥ K`.
    pub fn at(&self, i: usize) -> Complex64 {
        self.rho.get(i).copied().unwrap_or_default()
    }

    pub fn dim(&self) -> usize {
        self.rho.len()
    }
}

/// Computed by FFT as `conj(IFFT(|FFT(a)|²))` on a zero-padded buffer of
/// length at least `2K - 1`. `ρ(0)` is set to the exact codeword power.
pub fn aperiodic_autocorr(c: &Codeword) -> AutocorrProfile {
    let k = c.len();
    let len = (2 * k - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    buf[..k].copy_from_slice(c.symbols());
    planner.plan_fft_forward(len).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    let mut rho: Vec<Complex64> = buf[..k].iter().map(|z| z.conj() * scale).collect();
    rho[0] = Complex64::new(codeword_power(c), 0.0);
    AutocorrProfile { rho }
}

/// `ρ(0) + 2·Σ_{i≥1} |ρ(i)|`, an upper bound on `max_t |s(t)|²`.
pub fn autocorr_peak_bound(profile: &AutocorrProfile) -> f64 {
    profile.rho[0].re + 2.0 * profile.rho[1..].iter().map(|z| z.norm()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{generate_codebook, ConstellationSpec};
    use proptest::prelude::*;

    fn c(v: &[(f64, f64)]) -> Codeword {
        Codeword::new(v.iter().map(|&(r, i)| Complex64::new(r, i)).collect()).unwrap()
    }

    fn direct_peak(cw: &Codeword, points: usize) -> f64 {
        (0..points)
            .map(|i| {
                let t = i as f64 / points as f64;
                baseband_sample(cw, t).unwrap().norm_sqr()
            })
            .fold(0.0, f64::max)
    }

    fn rho_oracle(cw: &Codeword, i: usize) -> Complex64 {
        let a = cw.symbols();
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..a.len().saturating_sub(i) {
            acc += a[k] * a[k + i].conj();
        }
        acc
    }

    #[test]
    fn coherent_sum_at_origin() {
        let ones = Codeword::ones(4);
        assert_eq!(
            baseband_sample(&ones, 0.0).unwrap(),
            Complex64::new(4.0, 0.0)
        );
        let cw = c(&[(1.0, 2.0), (-0.5, 0.1), (3.0, -1.0)]);
        assert_eq!(
            baseband_sample(&cw, 0.0).unwrap(),
            cw.symbols().iter().sum::<Complex64>()
        );
        assert!(baseband_sample(&ones, 1.0).is_err());
        assert!(baseband_sample(&ones, -0.1).is_err());
    }

    #[test]
    fn grid_signal_matches_direct_summation() {
        let book = generate_codebook(ConstellationSpec::QAM16, 8, 4, 1, 1).unwrap();
        let grid = SamplingGrid::new(8, 4).unwrap();
        for cw in book.codewords() {
            let fast = grid.signal(cw).unwrap();
            for (t, z) in grid.times().zip(&fast) {
                let direct = baseband_sample(cw, t).unwrap();
                assert!((direct - z).norm() < 1e-12);
            }
        }
        // off-grid point, real arithmetic only
        let cw = &book.codewords()[0];
        let t = 0.3;
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, a) in cw.symbols().iter().enumerate() {
            let (s, co) = (2.0 * PI * k as f64 * t).sin_cos();
            re += a.re * co - a.im * s;
            im += a.re * s + a.im * co;
        }
        let got = baseband_sample(cw, t).unwrap();
        assert!((got - Complex64::new(re, im)).norm() < 1e-12);
    }

    #[test]
    fn peak_of_simple_codewords() {
        let grid = SamplingGrid::new(4, 16).unwrap();
        assert!((peak_envelope_power(&Codeword::ones(4), &grid).unwrap() - 16.0).abs() < 1e-12);
        let single = c(&[(0.6, -0.8)]);
        let g1 = SamplingGrid::new(1, 16).unwrap();
        for z in g1.signal(&single).unwrap() {
            assert!((z.norm_sqr() - 1.0).abs() < 1e-15);
        }
        assert!((pmepr(&Codeword::ones(4), &grid, 4.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(pmepr(&Codeword::ones(4), &grid, 0.0).is_err());
        assert!(pmepr(&Codeword::ones(4), &grid, -1.0).is_err());
        assert!(SamplingGrid::new(5, 2)
            .unwrap()
            .signal(&Codeword::ones(4))
            .is_err());
        assert!(SamplingGrid::new(4, 0).is_err());
    }

    #[test]
    fn oversampled_peak_close_to_dense_peak() {
        let book = generate_codebook(ConstellationSpec::QAM16, 8, 20, 1, 4).unwrap();
        let coarse = SamplingGrid::new(8, 16).unwrap();
        let fine = SamplingGrid::new(8, 1024).unwrap();
        for cw in book.codewords() {
            let p16 = peak_envelope_power(cw, &coarse).unwrap();
            let p1024 = peak_envelope_power(cw, &fine).unwrap();
            assert!(p16 <= p1024 * (1.0 + 1e-12));
            assert!(p16 >= 0.99 * p1024, "{p16} vs {p1024}");
            assert!((p1024 - direct_peak(cw, 8 * 1024)).abs() < 1e-9);
        }
    }

    #[test]
    fn max_pmepr_at_most_k() {
        let book = generate_codebook(ConstellationSpec::QAM16, 128, 50, 1, 8).unwrap();
        let grid = SamplingGrid::new(128, 4).unwrap();
        for cw in book.codewords() {
            let amp: f64 = cw.symbols().iter().map(|z| z.norm()).sum();
            let peak = peak_envelope_power(cw, &grid).unwrap();
            assert!(peak <= amp * amp * (1.0 + 1e-12));
            assert!(pmepr(cw, &grid, book.p_av()).unwrap() <= 128.0);
        }
    }

    #[test]
    fn autocorr_of_ones() {
        let p = aperiodic_autocorr(&Codeword::ones(4));
        let expect = [4.0, 3.0, 2.0, 1.0];
        for (z, e) in p.rho().iter().zip(expect) {
            assert!((z - Complex64::new(e, 0.0)).norm() < 1e-12);
        }
        assert_eq!(p.at(4), Complex64::new(0.0, 0.0));
        assert!((autocorr_peak_bound(&p) - 16.0).abs() < 1e-12);
        let one = aperiodic_autocorr(&c(&[(0.3, 0.4)]));
        assert!((autocorr_peak_bound(&one) - 0.25).abs() < 1e-16);
    }

    #[test]
    fn autocorr_matches_double_loop() {
        let book = generate_codebook(ConstellationSpec::QAM16, 16, 10, 1, 2).unwrap();
        for cw in book.codewords() {
            let p = aperiodic_autocorr(cw);
            assert_eq!(p.rho()[0].re, codeword_power(cw));
            for i in 0..16 {
                assert!((p.rho()[i] - rho_oracle(cw, i)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn autocorr_bound_dominates_sampled_peak() {
        let book = generate_codebook(ConstellationSpec::QAM16, 32, 1000, 1, 21).unwrap();
        let grid = SamplingGrid::new(32, 64).unwrap();
        for cw in book.codewords() {
            let bound = autocorr_peak_bound(&aperiodic_autocorr(cw));
            assert!(peak_envelope_power(cw, &grid).unwrap() <= bound);
        }
    }

    fn arb_codeword(max_k: usize) -> impl Strategy<Value = Codeword> {
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..max_k).prop_map(|v| c(&v))
    }

    proptest! {
        #[test]
        fn ordering_and_nesting(cw in arb_codeword(24), j in 1usize..8) {
            let p = aperiodic_autocorr(&cw);
            for z in p.rho() {
                prop_assert!(z.norm() <= p.rho()[0].re * (1.0 + 1e-12) + 1e-12);
            }
            let bound = autocorr_peak_bound(&p);
            let k = cw.len();
            let pj = peak_envelope_power(&cw, &SamplingGrid::new(k, j).unwrap()).unwrap();
            let p2j = peak_envelope_power(&cw, &SamplingGrid::new(k, 2 * j).unwrap()).unwrap();
            prop_assert!(pj <= p2j * (1.0 + 1e-12) + 1e-12);
            prop_assert!(p2j <= bound * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn pmepr_phase_and_scale_invariant(cw in arb_codeword(16), theta in 0.0f64..std::f64::consts::TAU, lambda in 0.1f64..10.0) {
            let k = cw.len();
            let grid = SamplingGrid::new(k, 8).unwrap();
            let p = codeword_power(&cw).max(1e-3);
            let base = pmepr(&cw, &grid, p).unwrap();
            let rotated = pmepr(&cw.scaled(Complex64::from_polar(1.0, theta)), &grid, p).unwrap();
            let scaled = pmepr(&cw.scaled(Complex64::new(lambda, 0.0)), &grid, p * lambda * lambda).unwrap();
            prop_assert!((base - rotated).abs() <= 1e-10 * base.max(1.0));
            prop_assert!((base - scaled).abs() <= 1e-10 * base.max(1.0));
        }
    }
}
