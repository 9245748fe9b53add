//! Spectral densities, canonical (minimum-phase) factorization and the
//! increment transfer that maps the factor `φ` to the factor `φ_τ` of the
//! increment process.
//!
//! Densities live on the band `|λ| ≤ π/dt` of a power-of-two grid. A rational
//! density is periodized onto the band (the spectrum of the process sampled
//! with step `dt`), so no power is lost beyond the band edge. The factor
//! samples are cell-centred: `phi.values[j]` approximates `φ((j + ½)·dt)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::increments::IncrementSpec;
use crate::quad::{hurwitz_zeta, Composite};
use crate::signal::SampledSignal;

/// Uniform frequency grid `λ_k = 2πk/(N·dt)`, `k = -N/2..N/2-1`, stored in
/// FFT order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub size: usize,
    pub dt: f64,
}

impl FrequencyGrid {
    pub fn new(size: usize, dt: f64) -> Result<Self> {
        if size < 8 || !size.is_power_of_two() {
            return invalid(format!("grid size must be a power of two >= 8, got {size}"));
        }
        if dt <= 0.0 || !dt.is_finite() {
            return invalid(format!("grid step must be positive, got {dt}"));
        }
        Ok(FrequencyGrid { size, dt })
    }

    pub fn dlambda(&self) -> f64 {
        2.0 * PI / (self.size as f64 * self.dt)
    }

    pub fn band_edge(&self) -> f64 {
        PI / self.dt
    }

    /// Frequency of FFT bin `k`.
    pub fn lambda(&self, k: usize) -> f64 {
        let n = self.size;
        let j = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        j * self.dlambda()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.size).map(|k| self.lambda(k)).collect()
    }

    /// Number of causal time samples kept for kernels.
    pub fn half(&self) -> usize {
        self.size / 2
    }

    /// FFT bins in increasing frequency order, from `-π/dt` upwards.
    pub fn sorted_bins(&self) -> Vec<usize> {
        let n = self.size;
        (n / 2..n).chain(0..n / 2).collect()
    }

    /// `(1/2π) Σ_k x_k Δλ`, the discrete form of `(1/2π)∫ x dλ`.
    pub fn integrate(&self, x: &[f64]) -> f64 {
        crate::par::pairwise_sum(x) * self.dlambda() / (2.0 * PI)
    }

    /// Symmetric tabulation `(λ, x(λ))` over `[-π/dt, π/dt]` with both band
    /// edges present (`N + 1` points).
    pub fn tabulate(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let bins = self.sorted_bins();
        let mut lam: Vec<f64> = bins.iter().map(|&k| self.lambda(k)).collect();
        let mut val: Vec<f64> = bins.iter().map(|&k| x[k]).collect();
        lam.push(self.band_edge());
        val.push(x[self.size / 2]);
        (lam, val)
    }
}

/// Nonnegative even spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralDensity {
    /// `num(λ²)/den(λ²)`, coefficients in ascending powers of `λ²`.
    Rational { num: Vec<f64>, den: Vec<f64> },
    /// Values on a symmetric increasing frequency grid, linearly interpolated
    /// and zero outside the table.
    Tabulated { lambda: Vec<f64>, values: Vec<f64> },
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

fn degree(c: &[f64]) -> Option<usize> {
    c.iter().rposition(|&v| v != 0.0)
}

impl SpectralDensity {
    pub fn rational(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return invalid("rational density needs numerator and denominator coefficients");
        }
        if num.iter().chain(&den).any(|v| !v.is_finite()) {
            return invalid("rational density coefficients must be finite");
        }
        if degree(&den).is_none() {
            return invalid("denominator is identically zero");
        }
        Ok(SpectralDensity::Rational { num, den })
    }

    pub fn tabulated(lambda: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = SpectralDensity::Tabulated { lambda, values };
        f.check_table()?;
        Ok(f)
    }

    /// Tabulated density carrying grid values (FFT order) over the band.
    pub fn from_grid(grid: &FrequencyGrid, values: &[f64]) -> Self {
        let (lambda, values) = grid.tabulate(values);
        SpectralDensity::Tabulated { lambda, values }
    }

    fn check_table(&self) -> Result<()> {
        if let SpectralDensity::Tabulated { lambda, values } = self {
            if lambda.len() != values.len() || lambda.len() < 2 {
                return invalid("tabulated density needs matching lambda/values arrays of length >= 2");
            }
            if lambda.iter().chain(values).any(|v| !v.is_finite()) {
                return invalid("tabulated density contains non-finite entries");
            }
            if lambda.windows(2).any(|w| w[1] <= w[0]) {
                return invalid("tabulated frequencies must be strictly increasing");
            }
        }
        Ok(())
    }

    pub fn eval(&self, lam: f64) -> f64 {
        match self {
            SpectralDensity::Rational { num, den } => {
                let x = lam * lam;
                poly(num, x) / poly(den, x)
            }
            SpectralDensity::Tabulated { lambda, values } => {
                if lam < lambda[0] || lam > lambda[lambda.len() - 1] {
                    return 0.0;
                }
                let i = lambda.partition_point(|&l| l <= lam).clamp(1, lambda.len() - 1);
                let (l0, l1) = (lambda[i - 1], lambda[i]);
                let w = (lam - l0) / (l1 - l0);
                values[i - 1] * (1.0 - w) + values[i] * w
            }
        }
    }

    /// `deg den - deg num` in `λ²` for rational densities.
    pub fn decay_order(&self) -> Option<i64> {
        match self {
            SpectralDensity::Rational { num, den } => {
                let dn = degree(num).map(|d| d as i64).unwrap_or(-1);
                let dd = degree(den)? as i64;
                if dn < 0 {
                    Some(i64::MAX)
                } else {
                    Some(dd - dn)
                }
            }
            SpectralDensity::Tabulated { .. } => None,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            SpectralDensity::Rational { num, den } => {
                SpectralDensity::Rational { num: num.iter().map(|v| v * c).collect(), den: den.clone() }
            }
            SpectralDensity::Tabulated { lambda, values } => {
                SpectralDensity::Tabulated { lambda: lambda.clone(), values: values.iter().map(|v| v * c).collect() }
            }
        }
    }

    /// Density values on the grid in FFT order. Rational densities are
    /// periodized: `Σ_j f(λ + 2jπ/dt)`.
    pub fn on_grid(&self, grid: &FrequencyGrid) -> Vec<f64> {
        match self {
            SpectralDensity::Tabulated { .. } => grid.lambdas().iter().map(|&l| self.eval(l)).collect(),
            SpectralDensity::Rational { num, den } => {
                let periodizer = Periodizer::new(num, den, grid.band_edge());
                grid.lambdas().iter().map(|&l| periodizer.eval(self, l)).collect()
            }
        }
    }
}

/// Lattice sum `Σ_j f(λ + 2jΛ)` for rational `f`: explicit terms for
/// `|j| ≤ J` plus a Laurent/Hurwitz-zeta tail.
struct Periodizer {
    band: f64,
    direct: i64,
    /// `f(x) = Σ_k laurent[k] x^{-2(k + p)}` for large `|x|`
    laurent: Vec<f64>,
    p: i64,
}

impl Periodizer {
    fn new(num: &[f64], den: &[f64], band: f64) -> Self {
        let dn = degree(num);
        let dd = degree(den).expect("validated denominator");
        let Some(dn) = dn else {
            return Periodizer { band, direct: 0, laurent: Vec::new(), p: 1 };
        };
        let p = dd as i64 - dn as i64;
        // reversed polynomials in y = 1/x²
        let nr: Vec<f64> = (0..=dn).map(|i| num[dn - i]).collect();
        let dr: Vec<f64> = (0..=dd).map(|i| den[dd - i]).collect();
        let terms = 10;
        let mut q = vec![0.0; terms];
        for k in 0..terms {
            let mut acc = nr.get(k).copied().unwrap_or(0.0);
            for j in 1..=k.min(dd) {
                acc -= dr[j] * q[k - j];
            }
            q[k] = acc / dr[0];
        }
        // Cauchy bound on the roots of den(w), w = x²
        let bound = 1.0 + den[..dd].iter().map(|c| (c / den[dd]).abs()).fold(0.0, f64::max);
        let rho = bound.sqrt();
        let direct = 64i64.max((4.0 * rho / (2.0 * band)).ceil() as i64);
        Periodizer { band, direct, laurent: q, p }
    }

    fn eval(&self, f: &SpectralDensity, lam: f64) -> f64 {
        if self.laurent.is_empty() {
            return 0.0;
        }
        let period = 2.0 * self.band;
        let mut s = f.eval(lam);
        for j in 1..=self.direct {
            let shift = j as f64 * period;
            s += f.eval(lam + shift) + f.eval(lam - shift);
        }
        if self.p >= 1 {
            let q_plus = (self.direct + 1) as f64 + lam / period;
            let q_minus = (self.direct + 1) as f64 - lam / period;
            for (k, c) in self.laurent.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                let s_exp = 2.0 * (k as f64 + self.p as f64);
                s += c * period.powf(-s_exp) * (hurwitz_zeta(s_exp, q_plus) + hurwitz_zeta(s_exp, q_minus));
            }
        }
        s
    }
}

/// Outcome of the admissibility checks on a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub symmetric: bool,
    pub nonnegative: bool,
    pub integrable: bool,
    pub paley_wiener: bool,
    /// `∫ |log f(λ)| / (1 + λ²) dλ` (over the table range for tabulated densities).
    pub paley_wiener_integral: f64,
    /// `(1/2π) ∫ f dλ`.
    pub power: f64,
    pub band_edge: Option<f64>,
    /// Fraction of the power beyond the band edge; it is folded back onto the
    /// band by periodization, not discarded.
    pub tail_fraction: Option<f64>,
    pub messages: Vec<String>,
    pub pass: bool,
}

pub fn validate_density(f: &SpectralDensity) -> ValidationReport {
    let mut messages = Vec::new();
    let gl = Composite::new(16);
    let (symmetric, nonnegative, integrable, pw_integral, power) = match f {
        SpectralDensity::Rational { num, den } => {
            let mut xs = vec![0.0];
            xs.extend((0..4000).map(|i| 10f64.powf(-8.0 + 16.0 * i as f64 / 3999.0)));
            let den_signs: Vec<f64> = xs.iter().map(|&x| poly(den, x)).collect();
            let den_ok = den_signs.iter().all(|&d| d != 0.0 && d.signum() == den_signs[0].signum());
            let nonneg = den_ok && xs.iter().all(|&x| poly(num, x) / poly(den, x) >= -1e-14 * (1.0 + x).powi(2));
            let decay = f.decay_order().unwrap_or(0);
            let integrable = den_ok && decay >= 1;
            if !den_ok {
                messages.push("denominator vanishes or changes sign on λ ≥ 0".into());
            }
            if decay < 1 {
                messages.push(format!("density does not decay (degree difference {decay} in λ²): ∫f = ∞"));
            }
            // λ = tan θ
            let pw = 2.0
                * gl.integrate(0.0, PI / 2.0, 256, |th| {
                    let v = f.eval(th.tan());
                    if v > 0.0 {
                        v.ln().abs()
                    } else {
                        f64::INFINITY
                    }
                });
            let power = if integrable {
                2.0 * gl.integrate(0.0, PI / 2.0, 256, |th| f.eval(th.tan()) / th.cos().powi(2)) / (2.0 * PI)
            } else {
                f64::INFINITY
            };
            (true, nonneg, integrable, pw, power)
        }
        SpectralDensity::Tabulated { lambda, values } => {
            let nn = lambda.len();
            let scale = lambda.iter().fold(0.0f64, |a, l| a.max(l.abs()));
            let vmax = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let sym = (0..nn)
                .all(|i| (lambda[i] + lambda[nn - 1 - i]).abs() <= 1e-9 * scale && (values[i] - values[nn - 1 - i]).abs() <= 1e-9 * vmax);
            if !sym {
                messages.push("tabulated density is not even on a symmetric grid".into());
            }
            let nonneg = values.iter().all(|&v| v >= 0.0);
            let zero_run = values.windows(2).any(|w| w[0] <= 0.0 && w[1] <= 0.0);
            let mut pw = 0.0;
            let mut power = 0.0;
            for i in 0..nn - 1 {
                let h = lambda[i + 1] - lambda[i];
                power += 0.5 * h * (values[i] + values[i + 1]);
                pw += gl.integrate(lambda[i], lambda[i + 1], 1, |l| {
                    let v = f.eval(l);
                    if v > 0.0 {
                        v.ln().abs() / (1.0 + l * l)
                    } else {
                        f64::INFINITY
                    }
                });
            }
            if zero_run {
                pw = f64::INFINITY;
            }
            (sym, nonneg, true, pw, power / (2.0 * PI))
        }
    };
    if !nonnegative {
        messages.push("density takes negative values".into());
    }
    let paley_wiener = pw_integral.is_finite();
    if !paley_wiener {
        messages.push("Paley–Wiener integral diverges (density vanishes on a set of positive measure)".into());
    }
    let pass = symmetric && nonnegative && integrable && paley_wiener;
    ValidationReport {
        symmetric,
        nonnegative,
        integrable,
        paley_wiener,
        paley_wiener_integral: pw_integral,
        power,
        band_edge: None,
        tail_fraction: None,
        messages,
        pass,
    }
}

/// [`validate_density`] plus the band edge and tail fraction for `grid`.
pub fn validate_density_on(f: &SpectralDensity, grid: &FrequencyGrid) -> ValidationReport {
    let mut report = validate_density(f);
    let edge = grid.band_edge();
    report.band_edge = Some(edge);
    if report.integrable && report.power > 0.0 && report.power.is_finite() {
        let tail = match f {
            SpectralDensity::Rational { .. } => {
                let gl = Composite::new(16);
                2.0 * gl.integrate(edge.atan(), PI / 2.0, 64, |th| f.eval(th.tan()) / th.cos().powi(2)) / (2.0 * PI)
            }
            SpectralDensity::Tabulated { lambda, .. } => {
                let top = lambda[lambda.len() - 1];
                if top <= edge {
                    0.0
                } else {
                    let gl = Composite::new(8);
                    2.0 * gl.integrate(edge, top, 512, |l| f.eval(l)) / (2.0 * PI)
                }
            }
        };
        report.tail_fraction = Some(tail / report.power);
    }
    report
}

/// Causal factor `φ` with `|Φ|² = f` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFactor {
    pub grid: FrequencyGrid,
    /// `N/2` causal samples at cell midpoints `(j + ½)·dt`.
    pub phi: SampledSignal,
    /// `Φ(λ_k) = dt Σ_j φ_j e^{-iλ_k j dt}` in FFT order.
    pub big_phi: Vec<Complex64>,
    /// The density actually factorized (after periodization and flooring).
    pub f_grid: Vec<f64>,
    /// Share of the energy of the raw cepstral factor at negative times.
    pub negative_time_energy: f64,
    /// `sup |(|Φ|² - f)| / max(f, ε)` after discarding negative times.
    pub roundtrip_error: f64,
}

pub const FLOOR_RATIO: f64 = 1e-12;

pub fn factorize(f: &SpectralDensity, grid: &FrequencyGrid) -> Result<CanonicalFactor> {
    let report = validate_density(f);
    if !report.paley_wiener {
        return Err(Error::Factorization(report.messages.join("; ")));
    }
    if !report.pass {
        return invalid(format!("density is not admissible: {}", report.messages.join("; ")));
    }
    factorize_grid(&f.on_grid(grid), grid)
}

/// Factorization on `grid` refined by doubling the grid size at fixed `dt`
/// until the negative-time energy share is at most `tol`. Finer grids shrink
/// the wrap-around of slowly decaying factors (densities with kinks).
pub fn factorize_refined(f: &SpectralDensity, grid: &FrequencyGrid, tol: f64, max_size: usize) -> Result<CanonicalFactor> {
    let mut g = *grid;
    loop {
        let factor = factorize(f, &g)?;
        if factor.negative_time_energy <= tol {
            return Ok(factor);
        }
        if 2 * g.size > max_size {
            return Err(Error::Resolution {
                message: format!("negative-time energy {:.3e} exceeds {tol:e} at grid size {}", factor.negative_time_energy, g.size),
                suggested_size: 2 * g.size,
            });
        }
        g = FrequencyGrid::new(2 * g.size, g.dt)?;
    }
}

/// Cepstral factorization of density values given on the grid (FFT order).
pub fn factorize_grid(values: &[f64], grid: &FrequencyGrid) -> Result<CanonicalFactor> {
    let n = grid.size;
    if values.len() != n {
        return invalid(format!("expected {n} grid values, got {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return invalid("grid density must be finite and nonnegative");
    }
    let fmax = values.iter().fold(0.0f64, |a, &v| a.max(v));
    if fmax <= 0.0 {
        return Err(Error::Factorization("density vanishes identically".into()));
    }
    let sorted = grid.sorted_bins();
    if sorted.windows(2).any(|w| values[w[0]] <= 0.0 && values[w[1]] <= 0.0) {
        return Err(Error::Factorization("density vanishes on an interval (Paley–Wiener condition fails)".into()));
    }
    let floor = FLOOR_RATIO * fmax;
    let f_grid: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    let half_log: Vec<f64> = f_grid.iter().map(|v| 0.5 * v.ln()).collect();
    let cep = fft::inverse_real(&half_log);
    let mut folded = vec![Complex64::new(0.0, 0.0); n];
    folded[0] = Complex64::new(cep[0].re, 0.0);
    for j in 1..n / 2 {
        folded[j] = Complex64::new(2.0 * cep[j].re, 0.0);
    }
    folded[n / 2] = Complex64::new(cep[n / 2].re, 0.0);
    let spectrum: Vec<Complex64> = fft::forward(&folded).iter().map(|z| z.exp()).collect();
    let raw: Vec<f64> = fft::inverse(&spectrum).iter().map(|z| z.re / grid.dt).collect();
    let total: f64 = raw.iter().map(|v| v * v).sum();
    let negative: f64 = raw[n / 2..].iter().map(|v| v * v).sum();
    let causal = &raw[..n / 2];
    let big_phi: Vec<Complex64> = fft::forward_real(&fft::padded(causal, n)).iter().map(|z| z * grid.dt).collect();
    let roundtrip_error = big_phi.iter().zip(&f_grid).map(|(z, &v)| (z.norm_sqr() - v).abs() / v.max(floor)).fold(0.0, f64::max);
    if roundtrip_error > 1e-2 {
        return Err(Error::Resolution {
            message: format!("factorization round-trip error {roundtrip_error:.3e} exceeds 1e-2"),
            suggested_size: 2 * n,
        });
    }
    Ok(CanonicalFactor {
        grid: *grid,
        phi: SampledSignal::new(0.5 * grid.dt, grid.dt, causal.to_vec())?,
        big_phi,
        f_grid,
        negative_time_energy: if total > 0.0 { negative / total } else { 0.0 },
        roundtrip_error,
    })
}

/// Net number of turns of `arg Φ` around the origin along the grid
/// (zero for a minimum-phase factor).
pub fn winding_number(big_phi: &[Complex64]) -> i64 {
    let n = big_phi.len();
    let mut turns = 0.0;
    for k in 0..n {
        let a = big_phi[k];
        let b = big_phi[(k + 1) % n];
        turns += (b / a).arg();
    }
    (turns / (2.0 * PI)).round() as i64
}

/// `Ω_τ(λ) = (1 - e^{-iλτ})^n (1 + iλ)^n / (iλ)^n`, with `Ω_τ(0) = τ^n`.
pub fn omega_tau_at(spec: IncrementSpec, lam: f64) -> Complex64 {
    let tau = spec.tau;
    let base = Complex64::from_polar(tau * crate::increments::sinc(lam * tau / 2.0), -lam * tau / 2.0) * Complex64::new(1.0, lam);
    base.powi(spec.n as i32)
}

/// [`omega_tau_at`] on every grid frequency (FFT order).
pub fn omega_tau(spec: IncrementSpec, grid: &FrequencyGrid) -> Vec<Complex64> {
    grid.lambdas().iter().map(|&l| omega_tau_at(spec, l)).collect()
}

/// Causal discrete increment transfer on the grid:
/// `(Σ_{i<m} z^{-i})^n ((1 + dt/2) - (1 - dt/2) z^{-1})^n`, `z = e^{iλdt}`.
/// The first factor equals `(1 - e^{-iλτ})/(1 - e^{-iλdt})` exactly; the
/// second is the trapezoidal realization of `(1 - e^{-iλdt})(1 + iλ)/(iλ)`.
/// Its squared modulus matches `|Ω_τ|²` to relative order `n·dt²/6`.
pub fn omega_discrete(spec: IncrementSpec, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    let m = spec.steps(grid.dt)?;
    let dt = grid.dt;
    Ok(grid
        .lambdas()
        .iter()
        .map(|&l| {
            let zinv = Complex64::from_polar(1.0, -l * dt);
            let mut box_sum = Complex64::new(0.0, 0.0);
            let mut p = Complex64::new(1.0, 0.0);
            for _ in 0..m {
                box_sum += p;
                p *= zinv;
            }
            let integ = Complex64::new(1.0 + dt / 2.0, 0.0) - zinv * (1.0 - dt / 2.0);
            (box_sum * integ).powi(spec.n as i32)
        })
        .collect())
}

/// Impulse response of the discrete increment transfer, obtained from
/// [`omega_discrete`] by an inverse transform: `φ_τ = taps ⊛ φ`.
pub fn w_tau_taps(spec: IncrementSpec, grid: &FrequencyGrid) -> Result<Vec<f64>> {
    let m = spec.steps(grid.dt)?;
    let len = spec.n as usize * m + 1;
    if len > grid.half() {
        return Err(Error::Resolution {
            message: format!("increment span of {len} samples does not fit in half the grid"),
            suggested_size: (2 * len).next_power_of_two().max(2 * grid.size),
        });
    }
    let omega = omega_discrete(spec, grid)?;
    Ok(fft::inverse(&omega)[..len].iter().map(|z| z.re).collect())
}

/// Factor of the increment process, `φ_τ = W^τ φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementFactor {
    pub spec: IncrementSpec,
    pub grid: FrequencyGrid,
    /// `N/2` causal samples at cell midpoints.
    pub phi_tau: SampledSignal,
    /// `Φ_τ = Ω·Φ` in FFT order.
    pub big_phi_tau: Vec<Complex64>,
    /// Share of the energy of `φ_τ` at negative times.
    pub negative_time_energy: f64,
}

/// `Φ_τ = Ω·Φ` on the grid followed by an inverse transform.
pub fn apply_w_tau(factor: &CanonicalFactor, spec: IncrementSpec) -> Result<IncrementFactor> {
    transfer(factor, spec, true)
}

/// Step-`dt` increments are close to white noise, so the band-edge guard
/// does not apply to them.
pub(crate) fn apply_unit_step(factor: &CanonicalFactor, n: u32) -> Result<IncrementFactor> {
    transfer(factor, IncrementSpec::new(n, factor.grid.dt)?, false)
}

fn transfer(factor: &CanonicalFactor, spec: IncrementSpec, edge_guard: bool) -> Result<IncrementFactor> {
    let grid = factor.grid;
    let n = grid.size;
    let omega = omega_discrete(spec, &grid)?;
    let big_phi_tau: Vec<Complex64> = omega.iter().zip(&factor.big_phi).map(|(o, p)| o * p).collect();
    let raw: Vec<f64> = fft::inverse(&big_phi_tau).iter().map(|z| z.re / grid.dt).collect();
    let total: f64 = raw.iter().map(|v| v * v).sum();
    let negative: f64 = raw[n / 2..].iter().map(|v| v * v).sum();
    let leak = if total > 0.0 { negative / total } else { 0.0 };
    if leak > 1e-6 {
        return Err(Error::Resolution {
            message: format!("increment factor wraps into negative times (energy share {leak:.2e})"),
            suggested_size: 2 * n,
        });
    }
    let energy: f64 = big_phi_tau.iter().map(|z| z.norm_sqr()).sum();
    let edge = 0.99 * grid.band_edge();
    let near_edge: f64 = big_phi_tau.iter().enumerate().filter(|(k, _)| grid.lambda(*k).abs() >= edge).map(|(_, z)| z.norm_sqr()).sum();
    if edge_guard && energy > 0.0 && near_edge > 0.01 * energy {
        return Err(Error::Resolution {
            message: format!("{:.1}% of the increment spectrum lies at the band edge", 100.0 * near_edge / energy),
            suggested_size: 2 * n,
        });
    }
    Ok(IncrementFactor {
        spec,
        grid,
        phi_tau: SampledSignal::new(0.5 * grid.dt, grid.dt, raw[..n / 2].to_vec())?,
        big_phi_tau,
        negative_time_energy: leak,
    })
}

/// Density of the increment process, `|Ω_τ(λ)|² f(λ)`, tabulated over the band.
pub fn increment_density(f: &SpectralDensity, spec: IncrementSpec, grid: &FrequencyGrid) -> SpectralDensity {
    let values: Vec<f64> = grid.lambdas().iter().map(|&l| omega_tau_at(spec, l).norm_sqr() * f.eval(l)).collect();
    SpectralDensity::from_grid(grid, &values)
}
