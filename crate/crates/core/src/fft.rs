//! Thin wrappers around rustfft with the library's scaling conventions.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Unnormalized forward DFT: `X_k = Σ_j x_j e^{-2πijk/N}`.
pub fn forward(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Normalized inverse DFT: `x_j = (1/N) Σ_k X_k e^{2πijk/N}`.
pub fn inverse(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

pub fn forward_real(x: &[f64]) -> Vec<Complex64> {
    forward(&x.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>())
}

pub fn inverse_real(x: &[f64]) -> Vec<Complex64> {
    inverse(&x.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>())
}

/// Zero-pads (or truncates) `x` to length `n`.
pub fn padded(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let k = x.len().min(n);
    out[..k].copy_from_slice(&x[..k]);
    out
}
