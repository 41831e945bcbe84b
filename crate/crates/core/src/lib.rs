//! Moment-based bound on the OFDM peak-to-mean envelope power ratio (PMEPR)
//! tail, and its reduction with one unitary precoder per codeword subset.
//!
//! The crate is organized bottom-up:
//!
//! - [`codebook`]: random QAM codebooks and their subset partition
//! - [`signal`]: baseband envelope, oversampled peak power, autocorrelation
//! - [`bound`]: DFT / half-shifted DFT machinery and the quartic CCDF bound
//! - [`optimizer`]: projected gradient descent over unitary matrices
//! - [`experiment`]: empirical CCDFs and the end-to-end experiment driver
//! - [`verify`]: invariant suite over random instances
//! - [`io`]: delimited-text file formats

pub mod bound;
pub mod codebook;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod optimizer;
pub mod signal;
pub mod verify;

pub use bound::{
    build_spectral_pair, ccdf_upper_bound, codeword_papr_bound, expansion_identity_check,
    moment_stats, quartic_sums, sample_second_moment, BoundReport, MomentStats, SpectralPair,
};
pub use codebook::{
    codeword_power, generate_codebook, Codebook, Codeword, ConstellationKind, ConstellationSpec,
};
pub use error::{Error, Result};
pub use experiment::{empirical_ccdf, run_experiment, CcdfCurve, ExperimentConfig, StepSize};
pub use linalg::CMatrix;
pub use optimizer::{
    gradient, gradient_step, objective, optimize, project_gram_schmidt, project_symmetric,
    OptimizerConfig, OptimizerTrace, Projection, UnitaryEnsemble,
};
pub use signal::{
    aperiodic_autocorr, autocorr_peak_bound, baseband_sample, peak_envelope_power, pmepr,
    AutocorrProfile, SamplingGrid,
};
pub use verify::{verify_suite, CheckResult, VerifyOptions, VerifyReport};

pub use num_complex::Complex64;
