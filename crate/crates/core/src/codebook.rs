//! Random QAM codebooks and their subset partition.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;

/// One OFDM block: `K` complex symbols, one per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword(Vec<Complex64>);

impl Codeword {
    pub fn new(symbols: Vec<Complex64>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("codeword must have at least one symbol"));
        }
        if symbols
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::invalid("codeword contains a non-finite symbol"));
        }
        Ok(Codeword(symbols))
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(k: usize) -> Self {
        assert!(k >= 1);
        Codeword(vec![Complex64::new(0.0, 0.0); k])
    }

    pub fn ones(k: usize) -> Self {
        assert!(k >= 1);
        Codeword(vec![Complex64::new(1.0, 0.0); k])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for API symmetry with `len`.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn symbols(&self) -> &[Complex64] {
        &self.0
    }

    /// Multiplies every symbol by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Codeword(self.0.iter().map(|z| z * factor).collect())
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

/// Total power `Σ_k |A_k|²` of a codeword.
pub fn codeword_power(c: &Codeword) -> f64 {
    c.symbols().iter().map(|z| z.norm_sqr()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Qam16,
    Qam4,
    Bpsk,
}

/// Symbol alphabet. With `normalized` set, points are scaled to unit mean
/// energy (16-QAM by `1/√10`, QPSK by `1/√2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub kind: ConstellationKind,
    pub normalized: bool,
}

impl ConstellationSpec {
    pub const QAM16: Self = Self::normalized(ConstellationKind::Qam16);
    pub const QAM4: Self = Self::normalized(ConstellationKind::Qam4);
    pub const BPSK: Self = Self::normalized(ConstellationKind::Bpsk);

    pub const fn normalized(kind: ConstellationKind) -> Self {
        Self {
            kind,
            normalized: true,
        }
    }

    pub const fn raw(kind: ConstellationKind) -> Self {
        Self {
            kind,
            normalized: false,
        }
    }

    pub fn points(&self) -> Vec<Complex64> {
        let (levels, scale): (&[f64], f64) = match self.kind {
            ConstellationKind::Qam16 => (&[-3.0, -1.0, 1.0, 3.0], 10f64.sqrt()),
            ConstellationKind::Qam4 => (&[-1.0, 1.0], 2f64.sqrt()),
            ConstellationKind::Bpsk => {
                return vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
            }
        };
        let scale = if self.normalized { scale } else { 1.0 };
        let mut pts = Vec::with_capacity(levels.len() * levels.len());
        for &re in levels {
            for &im in levels {
                pts.push(Complex64::new(re / scale, im / scale));
            }
        }
        pts
    }
}

impl fmt::Display for ConstellationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            ConstellationKind::Qam16 => "qam16",
            ConstellationKind::Qam4 => "qam4",
            ConstellationKind::Bpsk => "bpsk",
        };
        // BPSK already has unit energy, so the raw flag is not printed for it.
        if self.normalized || self.kind == ConstellationKind::Bpsk {
            f.write_str(name)
        } else {
            write!(f, "{name}-raw")
        }
    }
}

impl FromStr for ConstellationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (base, normalized) = match lower.strip_suffix("-raw") {
            Some(base) => (base, false),
            None => (lower.as_str(), true),
        };
        let kind = match base {
            "qam16" | "16qam" | "16-qam" => ConstellationKind::Qam16,
            "qam4" | "4qam" | "qpsk" => ConstellationKind::Qam4,
            "bpsk" => ConstellationKind::Bpsk,
            _ => return Err(Error::invalid(format!("unknown constellation `{s}`"))),
        };
        Ok(ConstellationSpec { kind, normalized })
    }
}

/// A finite set of codewords split into disjoint subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    codewords: Vec<Codeword>,
    partition: Vec<Vec<usize>>,
    p_av: f64,
    constellation: Option<ConstellationSpec>,
    seed: Option<u64>,
}

impl Codebook {
    /// Builds a codebook from explicit codewords and a partition of their
    /// indices. `p_av` is the sample mean of the codeword powers.
    pub fn new(codewords: Vec<Codeword>, partition: Vec<Vec<usize>>) -> Result<Self> {
        let Some(first) = codewords.first() else {
            return Err(Error::invalid(
                "codebook must contain at least one codeword",
            ));
        };
        let k = first.len();
        if let Some(bad) = codewords.iter().find(|c| c.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: bad.len(),
            });
        }
        if partition.is_empty() {
            return Err(Error::invalid("partition must have at least one subset"));
        }
        let mut seen = vec![false; codewords.len()];
        for &i in partition.iter().flatten() {
            if i >= codewords.len() {
                return Err(Error::invalid(format!("partition index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!(
                    "codeword {i} appears in more than one subset"
                )));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "codeword {missing} is not covered by the partition"
            )));
        }
        let powers: Vec<f64> = codewords.iter().map(codeword_power).collect();
        let p_av = pairwise_sum(&powers) / codewords.len() as f64;
        Ok(Codebook {
            codewords,
            partition,
            p_av,
            constellation: None,
            seed: None,
        })
    }

    /// Partitions `codewords` into `n` consecutive blocks of equal size.
    pub fn with_blocks(codewords: Vec<Codeword>, n: usize) -> Result<Self> {
        let partition = block_partition(codewords.len(), n)?;
        Self::new(codewords, partition)
    }

    pub(crate) fn with_origin(mut self, constellation: ConstellationSpec, seed: u64) -> Self {
        self.constellation = Some(constellation);
        self.seed = Some(seed);
        self
    }

    /// Subcarrier count `K`.
    pub fn dim(&self) -> usize {
        self.codewords[0].len()
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn num_subsets(&self) -> usize {
        self.partition.len()
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    pub fn p_av(&self) -> f64 {
        self.p_av
    }

    pub fn constellation(&self) -> Option<ConstellationSpec> {
        self.constellation
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn subset(&self, n: usize) -> Result<Vec<&Codeword>> {
        let idx = self.partition.get(n).ok_or(Error::SubsetIndex {
            index: n,
            subsets: self.partition.len(),
        })?;
        Ok(idx.iter().map(|&i| &self.codewords[i]).collect())
    }

    /// Subset index of every codeword.
    pub fn subset_of_each(&self) -> Vec<usize> {
        let mut owner = vec![0; self.codewords.len()];
        for (n, idx) in self.partition.iter().enumerate() {
            for &i in idx {
                owner[i] = n;
            }
        }
        owner
    }
}

/// Subset `n` holds indices `(M/N)·n .. (M/N)·(n+1)`.
pub fn block_partition(m: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("M and N must be at least 1"));
    }
    if !m.is_multiple_of(n) {
        return Err(Error::invalid(format!("N = {n} does not divide M = {m}")));
    }
    let size = m / n;
    Ok((0..n)
        .map(|b| (b * size..(b + 1) * size).collect())
        .collect())
}

/// Draws `m` codewords of length `k` with i.i.d. uniform symbols and splits
/// them into `n` consecutive blocks.
///
/// Codeword `i` uses ChaCha stream `i` of the seeded generator, so it does not
/// depend on generation order and the work runs in parallel.
pub fn generate_codebook(
    spec: ConstellationSpec,
    k: usize,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<Codebook> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let partition = block_partition(m, n)?;
    let points = spec.points();
    let codewords: Vec<Codeword> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let symbols = (0..k)
                .map(|_| points[rng.random_range(0..points.len())])
                .collect();
            Codeword(symbols)
        })
        .collect();
    Ok(Codebook::new(codewords, partition)?.with_origin(spec, seed))
}
