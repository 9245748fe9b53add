//! Increment calculus on uniform grids: exact coefficients, application and
//! inversion of the nth increment operator, and the structural function.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::Composite;
use crate::signal::{steps_of, SampledSignal};
use crate::spectral::SpectralDensity;

/// Order `n` and step `tau` of the increment `Σ_l (-1)^l C(n,l) ξ(t - lτ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementSpec {
    pub n: u32,
    pub tau: f64,
}

impl IncrementSpec {
    pub fn new(n: u32, tau: f64) -> Result<Self> {
        let spec = IncrementSpec { n, tau };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("increment order must be at least 1");
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return invalid(format!("increment step must be positive, got {}", self.tau));
        }
        Ok(())
    }

    /// `τ / dt`, which must be a positive integer.
    pub fn steps(&self, dt: f64) -> Result<usize> {
        self.check()?;
        steps_of(self.tau, dt)
    }

    /// The same order with step `dt`.
    pub fn unit_step(&self, dt: f64) -> IncrementSpec {
        IncrementSpec { n: self.n, tau: dt }
    }
}

/// `[(-1)^l C(n,l)]` for `l = 0..=n`.
pub fn binom_signed(n: i64) -> Result<Vec<i128>> {
    if n < 1 {
        return invalid(format!("order must be positive, got {n}"));
    }
    let mut row: Vec<i128> = vec![1];
    for _ in 0..n {
        let mut next = vec![0i128; row.len() + 1];
        for (i, &c) in row.iter().enumerate() {
            next[i] = next[i].checked_add(c).ok_or_else(|| overflow("binomial row"))?;
            next[i + 1] = next[i + 1].checked_sub(c).ok_or_else(|| overflow("binomial row"))?;
        }
        row = next;
    }
    Ok(row)
}

/// `d(k) = C(n+k-1, k)` for `k = 0..=K`, the coefficients of `(1-x)^{-n}`.
pub fn d_coeffs(n: u32, k_max: usize) -> Result<Vec<u128>> {
    if n == 0 {
        return invalid("order must be positive");
    }
    // n-fold prefix sums of the all-ones sequence
    let mut d = vec![1u128; k_max + 1];
    for _ in 1..n {
        for k in 1..=k_max {
            d[k] = d[k].checked_add(d[k - 1]).ok_or_else(|| overflow("d(k)"))?;
        }
    }
    Ok(d)
}

/// Coefficients of `(1 + x + … + x^{k-1})^n`, length `(k-1)n + 1`.
pub fn a_l_coeffs(n: u32, k: usize) -> Result<Vec<u128>> {
    if n == 0 || k == 0 {
        return invalid("order and multiplier must be positive");
    }
    let mut poly = vec![1u128];
    for _ in 0..n {
        let mut next = vec![0u128; poly.len() + k - 1];
        for (i, &c) in poly.iter().enumerate() {
            for slot in &mut next[i..i + k] {
                *slot = slot.checked_add(c).ok_or_else(|| overflow("A_l"))?;
            }
        }
        poly = next;
    }
    Ok(poly)
}

fn overflow(what: &str) -> Error {
    Error::Arithmetic(format!("{what} exceeds 128-bit range"))
}

pub(crate) fn binom_f64(n: u32) -> Vec<f64> {
    binom_signed(n as i64).expect("n >= 1").into_iter().map(|c| c as f64).collect()
}

/// `y_j = Σ_l (-1)^l C(n,l) x_{j + (n-l)m}`: the output index `j` corresponds
/// to input index `j + nm`.
pub(crate) fn difference(x: &[f64], n: u32, m: usize) -> Vec<f64> {
    let span = n as usize * m;
    if x.len() <= span {
        return Vec::new();
    }
    let b = binom_f64(n);
    (0..x.len() - span).map(|j| b.iter().enumerate().map(|(l, c)| c * x[j + span - l * m]).sum()).collect()
}

/// nth increment with step `tau`; the output starts at `t0 + nτ`.
pub fn apply_increment(path: &SampledSignal, spec: IncrementSpec) -> Result<SampledSignal> {
    let m = spec.steps(path.dt)?;
    apply_increment_steps(path, spec.n, m as i64)
}

/// nth increment with a signed step of `steps` grid points. For a negative
/// step the output at `t` uses `ξ(t), ξ(t + |τ|), …`, so it is defined on
/// `[t0, t_end - n|τ|]`.
pub fn apply_increment_steps(path: &SampledSignal, n: u32, steps: i64) -> Result<SampledSignal> {
    if n == 0 || steps == 0 {
        return invalid("order and step must be nonzero");
    }
    let m = steps.unsigned_abs() as usize;
    let span = n as usize * m;
    if path.len() <= span {
        return invalid(format!("path of {} samples is too short for an increment spanning {span} steps", path.len()));
    }
    if steps > 0 {
        SampledSignal::new(path.t(span), path.dt, difference(&path.values, n, m))
    } else {
        let b = binom_f64(n);
        let values = (0..path.len() - span).map(|j| b.iter().enumerate().map(|(l, c)| c * path.values[j + l * m]).sum()).collect();
        SampledSignal::new(path.t0, path.dt, values)
    }
}

/// Rebuilds `ξ` from its increments and the `nτ/dt` values preceding the
/// first increment. The result covers the initial block followed by the
/// reconstruction, so `apply_increment(result) == incs`.
pub fn invert_increment(incs: &SampledSignal, initial: &[f64], spec: IncrementSpec) -> Result<SampledSignal> {
    let m = spec.steps(incs.dt)?;
    let span = spec.n as usize * m;
    if initial.len() != span {
        return invalid(format!("expected {span} initial values, got {}", initial.len()));
    }
    let b = binom_f64(spec.n);
    let mut x = Vec::with_capacity(span + incs.len());
    x.extend_from_slice(initial);
    for (j, &inc) in incs.values.iter().enumerate() {
        let i = j + span;
        let known: f64 = (1..b.len()).map(|l| b[l] * x[i - l * m]).sum();
        x.push(inc - known);
    }
    SampledSignal::new(incs.t0 - span as f64 * incs.dt, incs.dt, x)
}

pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Structural function `D(t, τ1, τ2)`: the covariance of `ξ^{(n)}(s+t, τ1)`
/// and `ξ^{(n)}(s, τ2)`, evaluated as
/// `(1/2π) ∫ e^{iλt} (1-e^{-iλτ1})^n (1-e^{iλτ2})^n (1+λ²)^n λ^{-2n} f(λ) dλ`.
pub fn structural_function(f: &SpectralDensity, t: f64, tau1: f64, tau2: f64, n: u32) -> Result<Complex64> {
    if n == 0 || tau1.is_nan() || tau2.is_nan() || tau1 <= 0.0 || tau2 <= 0.0 || !t.is_finite() {
        return invalid("structural function needs n >= 1 and positive steps");
    }
    let nf = n as i32;
    // The factors combine into e^{iλs}·R(λ) with R real and even.
    let s = t - n as f64 * (tau1 - tau2) / 2.0;
    let envelope_at_zero = (tau1 * tau2).powi(nf);
    let r = |lam: f64| envelope_at_zero * (sinc(tau1 * lam / 2.0) * sinc(tau2 * lam / 2.0) * (1.0 + lam * lam)).powi(nf) * f.eval(lam);
    let omega_max = s.abs() + n as f64 * (tau1 + tau2) / 2.0;
    let gl = Composite::new(16);
    let value = match f {
        SpectralDensity::Tabulated { lambda, .. } => {
            let top = lambda.last().copied().unwrap_or(0.0).max(0.0);
            let h = (std::f64::consts::PI / (4.0 * omega_max.max(1e-3))).min(0.25);
            let panels = ((top / h).ceil() as usize).max(1);
            gl.integrate(0.0, top, panels, |l| (l * s).cos() * r(l))
        }
        SpectralDensity::Rational { num, den } => {
            if f.decay_order().unwrap_or(0) < 1 {
                return Err(Error::NumericalFailure(format!(
                    "divergent spectral integral: density of degree {}/{} in λ² does not decay",
                    num.len().saturating_sub(1),
                    den.len().saturating_sub(1)
                )));
            }
            let terms = trig_expansion(s, tau1, tau2, n);
            let omega_min = terms.iter().map(|(w, _)| w.abs()).filter(|w| *w > 1e-9).fold(f64::INFINITY, f64::min);
            let mut big_l: f64 = 2000.0;
            if omega_min.is_finite() {
                big_l = big_l.max(100.0 / omega_min).min(2e5);
            }
            let h = (std::f64::consts::PI / (4.0 * omega_max.max(1e-3))).min(0.25);
            let panels = (big_l / h).ceil() as usize;
            let head = gl.integrate(0.0, big_l, panels, |l| (l * s).cos() * r(l));
            let envelope = |l: f64| 4f64.powi(nf) * ((1.0 + l * l) / (l * l)).powi(nf) * f.eval(l);
            head + oscillatory_tail(&terms, big_l, &envelope)
        }
    };
    Ok(Complex64::new(value / std::f64::consts::PI, 0.0))
}

/// `cos(λs)·sin^n(τ1λ/2)·sin^n(τ2λ/2)` as `Σ_q γ_q e^{iω_q λ}`.
fn trig_expansion(s: f64, tau1: f64, tau2: f64, n: u32) -> Vec<(f64, Complex64)> {
    let b = binom_f64(n);
    let unit = Complex64::new(0.0, 2.0).powi(-(n as i32));
    let sin_pow =
        |tau: f64| -> Vec<(f64, Complex64)> { (0..=n as usize).map(|j| ((n as f64 - 2.0 * j as f64) * tau / 2.0, unit * b[j])).collect() };
    let mut terms: Vec<(f64, Complex64)> = Vec::new();
    for (w1, c1) in sin_pow(tau1) {
        for (w2, c2) in sin_pow(tau2) {
            for sign in [1.0, -1.0] {
                let w = w1 + w2 + sign * s;
                let c = c1 * c2 * 0.5;
                match terms.iter_mut().find(|(x, _)| (x - w).abs() < 1e-12 * (1.0 + w.abs())) {
                    Some(slot) => slot.1 += c,
                    None => terms.push((w, c)),
                }
            }
        }
    }
    terms
}

/// `Re Σ_q γ_q ∫_L^∞ e^{iω_q λ} E(λ) dλ` for a smooth decaying envelope `E`.
fn oscillatory_tail(terms: &[(f64, Complex64)], big_l: f64, envelope: &dyn Fn(f64) -> f64) -> f64 {
    let gl = Composite::new(16);
    // ∫_L^∞ E(λ) dλ = ∫_0^1 E(L/x) L/x² dx
    let flat = gl.integrate(0.0, 1.0, 8, |x| if x == 0.0 { 0.0 } else { envelope(big_l / x) * big_l / (x * x) });
    let h = 1e-2 * big_l;
    let e = [envelope(big_l - h), envelope(big_l), envelope(big_l + h)];
    let derivs = [e[1], (e[2] - e[0]) / (2.0 * h), (e[2] - 2.0 * e[1] + e[0]) / (h * h)];
    let mut total = Complex64::new(0.0, 0.0);
    for &(w, g) in terms {
        if w.abs() < 1e-9 {
            total += g * flat;
            continue;
        }
        let iw = Complex64::new(0.0, w);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, d) in derivs.iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * d / iw.powi(k as i32 + 1);
        }
        total += -g * Complex64::from_polar(1.0, w * big_l) * acc;
    }
    total.re
}
