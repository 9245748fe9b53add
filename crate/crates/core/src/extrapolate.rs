//! Optimal linear extrapolation of `Aξ = ∫_0^∞ a(t)ξ(t)dt` (or `∫_0^T`) from
//! observations of `ξ` on `t ≤ 0`.
//!
//! Discretization: `a` is integrated with trapezoid weights `α_j` on the
//! grid `t_j = j·dt`. Every other quadrature (the weights `c = D^τ α` of the
//! increments and `v` of the boundary values) is induced from `α`, which makes
//! `Σ α_j ξ_j = Σ c_j ξ^{(n)}(t_j, τ) - Σ v_i ξ_i` an exact grid identity.
//! Innovations are indexed by cells: cell `i` covers `(t_{i-1}, t_i]`, so the
//! unknown future is carried by cells `i ≥ 1` and the estimation error is
//! `Σ_{i≥1} g_i ε_i` with `g = D^τ A φ_τ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::increments::{binom_f64, difference, IncrementSpec};
use crate::signal::{steps_of, SampledSignal};
use crate::spectral::{
    apply_unit_step, apply_w_tau, factorize, CanonicalFactor, FrequencyGrid, IncrementFactor, SpectralDensity, FLOOR_RATIO,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Finite(f64),
    Infinite(InfiniteTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfiniteTag {
    #[serde(rename = "inf")]
    Inf,
}

impl Horizon {
    pub const INFINITE: Horizon = Horizon::Infinite(InfiniteTag::Inf);

    pub fn is_finite(&self) -> bool {
        matches!(self, Horizon::Finite(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridValues {
    dt: f64,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeightFile {
    grid: GridValues,
    horizon: Horizon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    #[serde(default)]
    decay_certified: bool,
}

/// Weight `a(t)` of the target functional, sampled from `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightFile", into = "WeightFile")]
pub struct WeightFunction {
    pub a: SampledSignal,
    pub horizon: Horizon,
    /// The caller asserts that `a` vanishes (or is negligible) beyond the last
    /// sample of an infinite-horizon weight.
    pub decay_certified: bool,
}

impl TryFrom<WeightFile> for WeightFunction {
    type Error = Error;

    fn try_from(w: WeightFile) -> Result<Self> {
        let mut values = w.grid.values;
        let dt = w.grid.dt;
        let end = match (w.horizon, w.t_max) {
            (Horizon::Finite(t), _) => Some(t),
            (Horizon::Infinite(_), t_max) => t_max,
        };
        if let Some(end) = end {
            let last =
                steps_of(end, dt).or_else(|_| if end == 0.0 { Ok(0) } else { invalid(format!("horizon {end} is not on the grid")) })?;
            values.resize(last + 1, 0.0);
        }
        let a = SampledSignal::new(0.0, dt, values)?;
        match w.horizon {
            Horizon::Finite(_) => WeightFunction::finite(a),
            Horizon::Infinite(_) => WeightFunction::infinite(a, w.decay_certified),
        }
    }
}

impl From<WeightFunction> for WeightFile {
    fn from(w: WeightFunction) -> Self {
        WeightFile {
            t_max: Some(w.t_max()),
            grid: GridValues { dt: w.a.dt, values: w.a.values },
            horizon: w.horizon,
            decay_certified: w.decay_certified,
        }
    }
}

impl WeightFunction {
    /// Weight on `[0, T]` with `T` the last sample time.
    pub fn finite(a: SampledSignal) -> Result<Self> {
        Self::check(&a)?;
        let t = a.t_end();
        Ok(WeightFunction { a, horizon: Horizon::Finite(t), decay_certified: true })
    }

    /// Weight on `[0, ∞)` truncated at the last sample time.
    pub fn infinite(a: SampledSignal, decay_certified: bool) -> Result<Self> {
        Self::check(&a)?;
        Ok(WeightFunction { a, horizon: Horizon::INFINITE, decay_certified })
    }

    fn check(a: &SampledSignal) -> Result<()> {
        if a.t0 != 0.0 {
            return invalid("weight samples must start at t = 0");
        }
        if a.is_empty() {
            return invalid("weight needs at least one sample");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.a.dt
    }

    /// Index of the last sample.
    pub fn last(&self) -> usize {
        self.a.len() - 1
    }

    pub fn t_max(&self) -> f64 {
        self.a.t_end()
    }

    /// Trapezoid-weighted samples `α_j = w_j a(t_j)`.
    pub fn alpha(&self) -> Vec<f64> {
        let dt = self.dt();
        let last = self.last();
        self.a
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if last > 0 && (j == 0 || j == last) {
                    0.5 * dt * v
                } else if last == 0 {
                    0.0
                } else {
                    dt * v
                }
            })
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut w = self.clone();
        w.a.values.iter_mut().for_each(|v| *v *= c);
        w
    }
}

/// Which operator form is used for `D^τ A φ_τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Variant {
    #[default]
    #[serde(rename = "infinite")]
    Infinite,
    #[serde(rename = "finiteT")]
    FiniteT,
    #[serde(rename = "hatT")]
    HatT,
}

impl Variant {
    pub fn check(self, a: &WeightFunction) -> Result<()> {
        if self != Variant::Infinite && !a.horizon.is_finite() {
            return invalid("finite-horizon variants need a weight with a finite horizon");
        }
        Ok(())
    }
}

/// `y_j = Σ_k d(k) x_{j+km}` over the available samples, computed as `n`
/// backward running sums with stride `m`.
pub(crate) fn d_apply(x: &[f64], n: u32, m: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for _ in 0..n {
        for j in (0..y.len().saturating_sub(m)).rev() {
            y[j] += y[j + m];
        }
    }
    y
}

/// `y_j = Σ_k d(k) x_{j-km}`: the same sums running forward in time.
fn d_apply_forward(x: &[f64], n: u32, m: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for _ in 0..n {
        for j in m..y.len() {
            y[j] += y[j - m];
        }
    }
    y
}

/// `v_i = Σ_{l=⌈-i/m⌉}^{n} (-1)^l C(n,l) b_{i+lm}` for `i = -nm..-1`.
pub(crate) fn v_apply(b: &[f64], n: u32, m: usize) -> Vec<f64> {
    let coef = binom_f64(n);
    let span = n as usize * m;
    (0..span)
        .map(|idx| {
            let i = idx as i64 - span as i64;
            let l0 = (-i as usize).div_ceil(m);
            (l0..=n as usize)
                .map(|l| {
                    let j = (i + (l * m) as i64) as usize;
                    b.get(j).map_or(0.0, |bj| coef[l] * bj)
                })
                .sum()
        })
        .collect()
}

fn check_decay(b: &[f64], a: &WeightFunction) -> Result<()> {
    if a.horizon.is_finite() || a.decay_certified {
        return Ok(());
    }
    let mass: f64 = b.iter().map(|v| v.abs()).sum();
    if mass == 0.0 {
        return Ok(());
    }
    let mut tail = 0.0;
    let mut cut = b.len();
    for j in (0..b.len()).rev() {
        tail += b[j].abs();
        if tail > 1e-8 * mass {
            break;
        }
        cut = j;
    }
    if cut as f64 > 0.9 * b.len() as f64 {
        return Err(Error::IllPosed(format!(
            "D^τ a does not decay within t_max = {}: the tail beyond {:.3} carries more than 1e-8 of its L¹ mass",
            a.t_max(),
            0.9 * a.t_max()
        )));
    }
    Ok(())
}

/// `b_τ = D^τ a`, i.e. `b_τ(t) = Σ_k d(k) a(t + kτ)` (the sum stops at the horizon).
pub fn d_transform(a: &WeightFunction, spec: IncrementSpec) -> Result<SampledSignal> {
    let m = spec.steps(a.dt())?;
    let b = d_apply(&a.a.values, spec.n, m);
    check_decay(&b, a)?;
    SampledSignal::new(0.0, a.dt(), b)
}

/// Boundary coefficients `v_τ` on `[-nτ, 0)` from `b_τ` on `[0, horizon]`.
pub fn v_coeffs(b_tau: &SampledSignal, spec: IncrementSpec) -> Result<SampledSignal> {
    let m = spec.steps(b_tau.dt)?;
    let span = spec.n as usize * m;
    SampledSignal::new(-(span as f64) * b_tau.dt, b_tau.dt, v_apply(&b_tau.values, spec.n, m))
}

/// The three terms of `Aξ = Bξ - Vξ` evaluated on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub a_xi: f64,
    pub b_xi: f64,
    pub v_xi: f64,
}

impl Decomposition {
    pub fn residual(&self) -> f64 {
        (self.a_xi - (self.b_xi - self.v_xi)).abs()
    }
}

pub fn decompose(a: &WeightFunction, path: &SampledSignal, spec: IncrementSpec) -> Result<Decomposition> {
    if (path.dt - a.dt()).abs() > 1e-12 * a.dt() {
        return invalid("path and weight use different grid steps");
    }
    let m = spec.steps(a.dt())?;
    let span = spec.n as usize * m;
    let origin = path.index_of(0.0).ok_or_else(|| Error::InvalidArgument("path does not contain t = 0".into()))?;
    if origin < span || path.len() <= origin + a.last() {
        return invalid(format!("path must cover [-{}, {}]", spec.tau * spec.n as f64, a.t_max()));
    }
    let alpha = a.alpha();
    let c = d_apply(&alpha, spec.n, m);
    let v = v_apply(&c, spec.n, m);
    let xi = &path.values;
    let incs = difference(&xi[origin - span..=origin + a.last()], spec.n, m);
    Ok(Decomposition {
        a_xi: alpha.iter().enumerate().map(|(j, w)| w * xi[origin + j]).sum(),
        b_xi: c.iter().zip(&incs).map(|(c, x)| c * x).sum(),
        v_xi: v.iter().enumerate().map(|(k, w)| w * xi[origin - span + k]).sum(),
    })
}

/// `|Aξ - (Bξ - Vξ)|` on the grid.
pub fn functional_decomposition_check(a: &WeightFunction, path: &SampledSignal, spec: IncrementSpec) -> Result<f64> {
    Ok(decompose(a, path, spec)?.residual())
}

/// Quadrature of `(Aφ)(t) = ∫ a(t+u) φ(u) du` (infinite, finiteT) or
/// `(Â_T φ)(t) = ∫_0^t a(T-t+u) φ(u) du` (hatT) on the weight's grid.
pub fn a_operator(a: &WeightFunction, phi_tau: &SampledSignal, variant: Variant) -> Result<SampledSignal> {
    if (phi_tau.dt - a.dt()).abs() > 1e-12 * a.dt() {
        return invalid("kernel and weight use different grid steps");
    }
    variant.check(a)?;
    SampledSignal::new(0.0, a.dt(), a_apply(&a.alpha(), &phi_tau.values, variant))
}

fn a_apply(alpha: &[f64], phi: &[f64], variant: Variant) -> Vec<f64> {
    let last = alpha.len() - 1;
    let at = |u: usize| phi.get(u).copied().unwrap_or(0.0);
    (0..=last)
        .map(|j| match variant {
            Variant::HatT => (0..=j).map(|u| alpha[last - j + u] * at(u)).sum(),
            _ => (0..=last - j).map(|u| alpha[j + u] * at(u)).sum(),
        })
        .collect()
}

/// The pieces of a functional that the spectral and time-domain pipelines share.
#[derive(Debug, Clone)]
pub(crate) struct GridFunctional {
    pub n: u32,
    pub m: usize,
    pub dt: f64,
    pub alpha: Vec<f64>,
    /// `c = D^τ α`
    pub c: Vec<f64>,
    /// boundary weights from `c`, indices `-nm..-1`
    pub v: Vec<f64>,
    pub variant: Variant,
}

impl GridFunctional {
    pub fn new(a: &WeightFunction, spec: IncrementSpec, variant: Variant) -> Result<Self> {
        variant.check(a)?;
        let m = spec.steps(a.dt())?;
        let alpha = a.alpha();
        let c = d_apply(&alpha, spec.n, m);
        check_decay(&c, a)?;
        let v = v_apply(&c, spec.n, m);
        Ok(GridFunctional { n: spec.n, m, dt: a.dt(), alpha, c, v, variant })
    }

    /// Number of future cells, which is also the operator dimension.
    pub fn cells(&self) -> usize {
        self.c.len() - 1
    }

    /// `g_k`, `k = 0..cells`: weight of future cell `k + 1` (infinite,
    /// finiteT), or the reflected sequence `D_T Â_T φ_τ` (hatT).
    pub fn g(&self, phi_tau: &[f64]) -> Vec<f64> {
        let cells = self.cells();
        let at = |u: usize| phi_tau.get(u).copied().unwrap_or(0.0);
        match self.variant {
            Variant::HatT => {
                let y = a_apply(&self.alpha, phi_tau, Variant::HatT);
                let mut out = d_apply_forward(&y[..cells], self.n, self.m);
                out.truncate(cells);
                out
            }
            _ => (0..cells).map(|k| (0..cells - k).map(|u| self.c[k + 1 + u] * at(u)).sum()).collect(),
        }
    }

    /// Transform of `g` on the grid: `r(λ) = dt Σ_k g_k e^{iλ(k+1)dt}`, or
    /// for hatT `r̂(λ) = dt Σ_k ĝ_k e^{-iλ k dt}`.
    pub fn r(&self, g: &[f64], grid: &FrequencyGrid) -> Vec<Complex64> {
        let n = grid.size;
        match self.variant {
            Variant::HatT => fft::forward_real(&fft::padded(g, n)).iter().map(|z| z * self.dt).collect(),
            _ => {
                let mut seq = vec![0.0; n];
                seq[1..=g.len()].copy_from_slice(g);
                fft::inverse_real(&seq).iter().map(|z| z * (self.dt * n as f64)).collect()
            }
        }
    }

    /// `A_τ(λ) = Σ_j c_j e^{iλ t_j}`.
    pub fn a_tau(&self, grid: &FrequencyGrid) -> Vec<Complex64> {
        let n = grid.size;
        fft::inverse_real(&fft::padded(&self.c, n)).iter().map(|z| z * n as f64).collect()
    }

    /// Horizon phase turning `r̂` into `r`: `r(λ) = e^{iλT} r̂(λ)`.
    pub fn unreflect(&self, r_hat: &[Complex64], grid: &FrequencyGrid) -> Vec<Complex64> {
        let t = self.cells() as f64 * self.dt;
        r_hat.iter().enumerate().map(|(k, z)| z * Complex64::from_polar(1.0, grid.lambda(k) * t)).collect()
    }

    pub fn check_grid(&self, grid: &FrequencyGrid) -> Result<()> {
        if (grid.dt - self.dt).abs() > 1e-12 * self.dt {
            return invalid("weight and frequency grid use different steps");
        }
        if self.c.len() + self.n as usize * self.m + 1 > grid.half() {
            return Err(Error::Resolution {
                message: format!("weight support of {} samples does not fit in half the grid", self.c.len()),
                suggested_size: (4 * self.c.len()).next_power_of_two().max(2 * grid.size),
            });
        }
        Ok(())
    }
}

/// Output of the spectral-certainty estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub variant: Variant,
    pub grid: FrequencyGrid,
    /// Spectral characteristic in FFT order.
    pub h: Vec<Complex64>,
    pub b_tau: SampledSignal,
    pub v_tau: SampledSignal,
    /// `r_τ` in FFT order (the reflected form `r̂` for hatT).
    pub r_tau: Vec<Complex64>,
    /// `‖D^τ A φ_τ‖²` in the time domain.
    pub mse: f64,
    /// `(1/2π) ∫ |r_τ|² dλ`.
    pub mse_spectral: f64,
    pub t_max: f64,
}

/// Regularized `1/Φ_τ`: `conj(Φ_τ)/(|Φ_τ|² + δ²)`, `δ = 1e-10·max|Φ_τ|`.
pub(crate) fn regularized_inverse(big_phi_tau: &[Complex64]) -> Vec<Complex64> {
    let peak = big_phi_tau.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let delta2 = (1e-10 * peak).powi(2);
    big_phi_tau.iter().map(|z| if peak == 0.0 { Complex64::new(0.0, 0.0) } else { z.conj() / (z.norm_sqr() + delta2) }).collect()
}

/// Fails when `r` carries weight where the density was floored to zero.
fn check_conditioning(factor: &CanonicalFactor, r: &[Complex64]) -> Result<()> {
    let fmax = factor.f_grid.iter().fold(0.0f64, |a, &v| a.max(v));
    let rmax = r.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let floor = FLOOR_RATIO * fmax * (1.0 + 1e-9);
    for (k, (&f, z)) in factor.f_grid.iter().zip(r).enumerate() {
        if f <= floor && z.norm() > 1e-8 * rmax {
            return Err(Error::Conditioning(format!(
                "spectral factor vanishes at λ = {:.4} where the characteristic is non-negligible",
                factor.grid.lambda(k)
            )));
        }
    }
    Ok(())
}

/// Spectral characteristic and mean-square error for a density `f`.
pub fn spectral_characteristic(
    a: &WeightFunction,
    f: &SpectralDensity,
    spec: IncrementSpec,
    grid: &FrequencyGrid,
    variant: Variant,
) -> Result<ExtrapolationResult> {
    let factor = factorize(f, grid)?;
    characteristic_from_factor(a, &factor, spec, variant)
}

pub fn characteristic_from_factor(
    a: &WeightFunction,
    factor: &CanonicalFactor,
    spec: IncrementSpec,
    variant: Variant,
) -> Result<ExtrapolationResult> {
    let grid = factor.grid;
    let gf = GridFunctional::new(a, spec, variant)?;
    gf.check_grid(&grid)?;
    let inc = apply_w_tau(factor, spec)?;
    let g = gf.g(&inc.phi_tau.values);
    let mse = gf.dt * g.iter().map(|v| v * v).sum::<f64>();
    let r_tau = gf.r(&g, &grid);
    let r = if variant == Variant::HatT { gf.unreflect(&r_tau, &grid) } else { r_tau.clone() };
    check_conditioning(factor, &r)?;
    let inv = regularized_inverse(&inc.big_phi_tau);
    let a_tau = gf.a_tau(&grid);
    let h = a_tau.iter().zip(&r).zip(&inv).map(|((a, r), i)| a - r * i).collect();
    let mse_spectral = grid.integrate(&r_tau.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
    let b_tau = d_transform(a, spec)?;
    let v_tau = v_coeffs(&b_tau, spec)?;
    Ok(ExtrapolationResult { variant, grid, h, b_tau, v_tau, r_tau, mse, mse_spectral, t_max: a.t_max() })
}

/// `r_τ` for the selected variant, from an increment factor.
pub fn r_function(a: &WeightFunction, factor: &IncrementFactor, variant: Variant) -> Result<Vec<Complex64>> {
    let gf = GridFunctional::new(a, factor.spec, variant)?;
    gf.check_grid(&factor.grid)?;
    Ok(gf.r(&gf.g(&factor.phi_tau.values), &factor.grid))
}

/// Prediction of the single value `ξ^{(n)}(u, τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueResult {
    pub u: f64,
    pub grid: FrequencyGrid,
    pub h: Vec<Complex64>,
    pub r: Vec<Complex64>,
    /// `∫_0^u |φ_τ(y)|² dy` (midpoint sum over the cells in `(0, u]`).
    pub mse: f64,
}

pub fn estimate_value(u: f64, f: &SpectralDensity, spec: IncrementSpec, grid: &FrequencyGrid) -> Result<ValueResult> {
    let factor = factorize(f, grid)?;
    value_from_factor(u, &factor, spec)
}

pub fn value_from_factor(u: f64, factor: &CanonicalFactor, spec: IncrementSpec) -> Result<ValueResult> {
    let grid = factor.grid;
    let steps = value_steps(u, grid.dt, grid.half())?;
    let inc = apply_w_tau(factor, spec)?;
    let phi = &inc.phi_tau.values;
    let mse = grid.dt * phi[..steps].iter().fold(0.0, |acc, v| acc + v * v);
    // r(λ) = dt Σ_{k<U} φ_τ[k] e^{iλ(U-k)dt}
    let mut seq = vec![0.0; grid.size];
    for k in 0..steps {
        seq[steps - k] = phi[k];
    }
    let r: Vec<Complex64> = fft::inverse_real(&seq).iter().map(|z| z * (grid.dt * grid.size as f64)).collect();
    let inv = regularized_inverse(&inc.big_phi_tau);
    let h = (0..grid.size).map(|k| Complex64::from_polar(1.0, grid.lambda(k) * u) - r[k] * inv[k]).collect();
    Ok(ValueResult { u, grid, h, r, mse })
}

fn value_steps(u: f64, dt: f64, limit: usize) -> Result<usize> {
    if u < 0.0 || !u.is_finite() {
        return invalid(format!("lead time must be nonnegative, got {u}"));
    }
    let steps = if u == 0.0 { 0 } else { steps_of(u, dt)? };
    if steps >= limit {
        return Err(Error::Resolution { message: format!("lead time {u} exceeds half the grid span"), suggested_size: 4 * limit });
    }
    Ok(steps)
}

/// Kernel of the step-`dt` increments (minimum phase), trimmed where its
/// energy tail falls below `1e-26` of the total.
fn unit_kernel(factor: &CanonicalFactor, n: u32) -> Result<Vec<f64>> {
    let unit = apply_unit_step(factor, n)?;
    let psi = unit.phi_tau.values;
    let total: f64 = psi.iter().map(|v| v * v).sum();
    let mut tail = 0.0;
    let mut len = psi.len();
    while len > 1 {
        let next = tail + psi[len - 1] * psi[len - 1];
        if next > 1e-26 * total {
            break;
        }
        tail = next;
        len -= 1;
    }
    if psi[0].abs() < 1e-12 * total.sqrt() {
        return Err(Error::Conditioning("leading coefficient of the innovation filter vanishes".into()));
    }
    Ok(psi[..len].to_vec())
}

/// Causal deconvolution `ψ ⊛ e = x` with zero history before the window.
pub(crate) fn deconvolve(x: &[f64], psi: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let k_max = j.min(psi.len() - 1);
        let mut acc = x[j];
        for k in 1..=k_max {
            acc -= psi[k] * e[j - k];
        }
        e.push(acc / psi[0]);
    }
    e
}

fn check_innovations(e: &[f64], dt: f64) -> Result<()> {
    let count = e.len() as f64;
    let ratio = e.iter().map(|v| v * v).sum::<f64>() / (count * dt);
    let dev = (ratio - 1.0).abs();
    if dev > 0.1 && dev > 6.0 * (2.0 / count).sqrt() {
        return Err(Error::Conditioning(format!("recovered innovations carry {ratio:.3} times the model energy")));
    }
    Ok(())
}

/// Samples needed before `t = 0` so that the part of `φ_τ` beyond the
/// window carries at most 1% of its energy.
fn window_needed(phi_tau: &[f64], n: u32, span: usize) -> usize {
    let total: f64 = phi_tau.iter().map(|v| v * v).sum();
    let mut tail = 0.0;
    let mut len = phi_tau.len();
    while len > 0 && tail + phi_tau[len - 1].powi(2) <= 0.01 * total {
        tail += phi_tau[len - 1].powi(2);
        len -= 1;
    }
    (len + n as usize).max(span + n as usize)
}

/// Past innovations recovered from an observed path ending at `t = 0`.
struct Observed<'a> {
    xi: &'a [f64],
    /// `ε̂_0, ε̂_{-1}, …` (most recent first)
    eps_rev: Vec<f64>,
}

fn observe<'a>(path: &'a SampledSignal, dt: f64, n: u32, psi: &[f64], min_window: usize) -> Result<Observed<'a>> {
    if (path.dt - dt).abs() > 1e-12 * dt {
        return invalid("path and model use different grid steps");
    }
    if path.t_end().abs() > 1e-9 * dt.max(path.t_end().abs()) {
        return invalid("observed path must end at t = 0");
    }
    if path.len() < min_window + 1 {
        return invalid(format!("observation window of {} samples is shorter than the required {}", path.len(), min_window + 1));
    }
    let unit_incs = difference(&path.values, n, 1);
    let mut eps = deconvolve(&unit_incs, psi);
    check_innovations(&eps, dt)?;
    eps.reverse();
    Ok(Observed { xi: &path.values, eps_rev: eps })
}

/// Time-domain form of the optimal estimate of `Aξ`: `B̂ξ - Vξ`, where `B̂ξ`
/// weights past innovations recovered by causal deconvolution of the step-`dt`
/// increments.
#[derive(Debug, Clone)]
pub struct FunctionalEstimator {
    gf: GridFunctional,
    psi: Vec<f64>,
    /// `κ_s = Σ_j c_j φ_τ[j + s]`: weight of innovation `ε_{-s}`
    kappa: Vec<f64>,
    min_window: usize,
}

impl FunctionalEstimator {
    pub fn new(a: &WeightFunction, factor: &CanonicalFactor, spec: IncrementSpec, variant: Variant) -> Result<Self> {
        let gf = GridFunctional::new(a, spec, variant)?;
        gf.check_grid(&factor.grid)?;
        let inc = apply_w_tau(factor, spec)?;
        let phi = &inc.phi_tau.values;
        let kappa =
            (0..phi.len()).map(|s| gf.c.iter().enumerate().filter(|(j, _)| j + s < phi.len()).map(|(j, c)| c * phi[j + s]).sum()).collect();
        let psi = unit_kernel(factor, spec.n)?;
        let min_window = window_needed(phi, spec.n, spec.n as usize * gf.m);
        Ok(FunctionalEstimator { gf, psi, kappa, min_window })
    }

    /// Smallest number of past samples (before `t = 0`) accepted.
    pub fn min_window(&self) -> usize {
        self.min_window
    }

    /// Estimate of `Aξ` from `ξ` observed on `[-L·dt, 0]`.
    pub fn estimate(&self, path: &SampledSignal) -> Result<f64> {
        let obs = observe(path, self.gf.dt, self.gf.n, &self.psi, self.min_window)?;
        Ok(self.combine(&obs.eps_rev, obs.xi))
    }

    /// The same projection computed from known innovations `ε_0, ε_{-1}, …`.
    pub fn estimate_with_innovations(&self, path: &SampledSignal, eps_rev: &[f64]) -> Result<f64> {
        if path.len() < self.gf.v.len() + 1 {
            return invalid("path is shorter than the boundary block");
        }
        Ok(self.combine(eps_rev, &path.values))
    }

    fn combine(&self, eps_rev: &[f64], xi: &[f64]) -> f64 {
        let b_hat: f64 = eps_rev.iter().zip(&self.kappa).map(|(e, k)| e * k).sum();
        let span = self.gf.v.len();
        let start = xi.len() - 1 - span;
        let v_xi: f64 = self.gf.v.iter().enumerate().map(|(i, w)| w * xi[start + i]).sum();
        b_hat - v_xi
    }

    /// Grid-weighted samples `α_j` of the target functional.
    pub fn alpha(&self) -> &[f64] {
        &self.gf.alpha
    }
}

/// One-shot time-domain estimate of `Aξ` (or `A_Tξ`).
pub fn estimate_functional_timedomain(
    path: &SampledSignal,
    a: &WeightFunction,
    f: &SpectralDensity,
    spec: IncrementSpec,
    grid: &FrequencyGrid,
    variant: Variant,
) -> Result<f64> {
    let factor = factorize(f, grid)?;
    FunctionalEstimator::new(a, &factor, spec, variant)?.estimate(path)
}

/// Time-domain predictor of `ξ^{(n)}(u, τ)` and, for `τ > u`, of `ξ(u)`.
#[derive(Debug, Clone)]
pub struct ValueEstimator {
    steps: usize,
    n: u32,
    m: usize,
    dt: f64,
    phi_tau: Vec<f64>,
    psi: Vec<f64>,
    min_window: usize,
}

impl ValueEstimator {
    pub fn new(u: f64, factor: &CanonicalFactor, spec: IncrementSpec) -> Result<Self> {
        let grid = factor.grid;
        let steps = value_steps(u, grid.dt, grid.half())?;
        let m = spec.steps(grid.dt)?;
        let inc = apply_w_tau(factor, spec)?;
        let phi_tau = inc.phi_tau.values;
        let psi = unit_kernel(factor, spec.n)?;
        let min_window = window_needed(&phi_tau, spec.n, spec.n as usize * m);
        Ok(ValueEstimator { steps, n: spec.n, m, dt: grid.dt, phi_tau, psi, min_window })
    }

    pub fn min_window(&self) -> usize {
        self.min_window
    }

    /// Estimate of `ξ^{(n)}(u, τ)`. At `u = 0` the increment is observed and
    /// returned as is.
    pub fn estimate_increment(&self, path: &SampledSignal) -> Result<f64> {
        if self.steps == 0 {
            if path.len() <= self.n as usize * self.m {
                return invalid("path is shorter than one increment");
            }
            let last = path.len() - 1;
            let coef = binom_f64(self.n);
            return Ok(coef.iter().enumerate().map(|(l, c)| c * path.values[last - l * self.m]).sum());
        }
        let obs = observe(path, self.dt, self.n, &self.psi, self.min_window)?;
        Ok(self.project(&obs.eps_rev))
    }

    /// `Σ_{k≥U} φ_τ[k] ε_{U-k}` from innovations `ε_0, ε_{-1}, …`.
    pub fn project(&self, eps_rev: &[f64]) -> f64 {
        self.phi_tau.iter().skip(self.steps).zip(eps_rev).map(|(p, e)| p * e).sum()
    }

    /// Estimate of `ξ(u)` for `τ > u`: the boundary values `ξ(u - lτ)` are
    /// observed and only the increment is predicted.
    pub fn estimate_process(&self, path: &SampledSignal) -> Result<f64> {
        if self.steps >= self.m {
            return invalid("process-value prediction needs τ > u");
        }
        let inc = self.estimate_increment(path)?;
        let coef = binom_f64(self.n);
        let last = path.len() - 1;
        let known: f64 = (1..=self.n as usize)
            .map(|l| {
                let back = l * self.m - self.steps;
                -coef[l] * path.values[last - back]
            })
            .sum();
        Ok(known + inc)
    }
}

/// `(1/2π) ∫ |x|² dλ` on the grid.
pub fn spectral_energy(x: &[Complex64], grid: &FrequencyGrid) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dlambda() / (2.0 * PI)
}
