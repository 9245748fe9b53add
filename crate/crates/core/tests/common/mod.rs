#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

use increx::extrapolate::WeightFunction;
use increx::{FrequencyGrid, SampledSignal, SpectralDensity};

pub const DT: f64 = 0.05;

pub fn grid() -> FrequencyGrid {
    FrequencyGrid::new(4096, DT).unwrap()
}

pub fn small_grid() -> FrequencyGrid {
    FrequencyGrid::new(1024, DT).unwrap()
}

/// `1/(1+λ²)`
pub fn ou() -> SpectralDensity {
    SpectralDensity::rational(vec![1.0], vec![1.0, 1.0]).unwrap()
}

/// `1/(1+λ²)²`
pub fn ou2() -> SpectralDensity {
    SpectralDensity::rational(vec![1.0], vec![1.0, 2.0, 1.0]).unwrap()
}

pub fn weight(len: usize, a: impl Fn(f64) -> f64) -> WeightFunction {
    WeightFunction::finite(SampledSignal::from_fn(0.0, DT, len, a).unwrap()).unwrap()
}

/// Coefficients of the product of integer polynomials.
pub fn poly_mul(a: &[i128], b: &[i128]) -> Vec<i128> {
    let mut out = vec![0i128; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn poly_pow(base: &[i128], n: u32) -> Vec<i128> {
    (0..n).fold(vec![1i128], |acc, _| poly_mul(&acc, base))
}

/// Cyclic Jacobi eigenvalue iteration for symmetric matrices (row-major).
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Adaptive Simpson quadrature.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
