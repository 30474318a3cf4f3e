//! Polynomial roots through companion-matrix eigenvalues.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Roots of `coeffs[0] x^n + coeffs[1] x^(n-1) + ... + coeffs[n]`.
///
/// Leading zeros are stripped; a constant polynomial has no roots.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let start = coeffs
        .iter()
        .position(|c| *c != 0.0)
        .unwrap_or(coeffs.len());
    let coeffs = &coeffs[start..];
    if coeffs.len() < 2 {
        return Vec::new();
    }
    let n = coeffs.len() - 1;
    let lead = coeffs[0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -coeffs[j + 1] / lead;
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Horner evaluation, same coefficient order as [`roots`].
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}
