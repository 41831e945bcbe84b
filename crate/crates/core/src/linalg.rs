//! Small complex linear-algebra helpers shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex64>;

/// `max |(A A*)_{ij} - I_{ij}|`.
pub fn unitarity_error(a: &CMatrix) -> f64 {
    let gram = a * a.adjoint();
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).norm());
        }
    }
    worst
}

/// Largest entrywise modulus of `a - b`. Panics on shape mismatch.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Pairwise (tree) summation. The reduction order depends only on the slice
/// length, so results are reproducible regardless of how the terms were
/// produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
