//! Least favorable densities and minimax-robust characteristics for the
//! classes `D₀` (power bound), `D_v^u` (band with fixed power) and `D_δ`
//! (L¹ neighbourhood of a bounded density), with saddle-point checks.
//!
//! The composed operator `D^τ A W^τ` acts on the causal factor `φ`. On the
//! grid it is a Hankel matrix `M_{k,u} = Σ_i w_i c_{k+u+1+i}` (taps `w` of the
//! discrete increment transfer), so for the infinite and finite-horizon forms
//! it is symmetric; the reflected hatT form is its row reversal.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::extrapolate::{characteristic_from_factor, ExtrapolationResult, GridFunctional, Variant, WeightFunction};
use crate::fft;
use crate::increments::IncrementSpec;
use crate::par::{map_indices, Execution};
use crate::signal::SampledSignal;
use crate::spectral::{factorize_grid, omega_discrete, w_tau_taps, CanonicalFactor, FrequencyGrid, SpectralDensity};

/// Admissible density class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum DensityClass {
    #[serde(rename = "D0")]
    D0 {
        #[serde(rename = "P0")]
        p0: f64,
    },
    #[serde(rename = "band")]
    Band {
        v: SpectralDensity,
        u: SpectralDensity,
        #[serde(rename = "P0")]
        p0: f64,
    },
    #[serde(rename = "eps")]
    Eps { v: SpectralDensity, delta: f64 },
}

impl DensityClass {
    pub fn name(&self) -> &'static str {
        match self {
            DensityClass::D0 { .. } => "D0",
            DensityClass::Band { .. } => "band",
            DensityClass::Eps { .. } => "eps",
        }
    }
}

/// Iteration controls of the clipped fixed-point solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub damping: f64,
    /// Target relative L¹ change between iterates.
    pub tolerance: f64,
    /// Largest residual still accepted when the iteration budget runs out.
    pub accept: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { damping: 0.5, tolerance: 1e-10, accept: 1e-6, max_iterations: 500 }
    }
}

/// Extrapolation problem shared by the solvers: weight, increment, grid, variant.
#[derive(Debug, Clone)]
pub struct Problem {
    pub a: WeightFunction,
    pub spec: IncrementSpec,
    pub grid: FrequencyGrid,
    pub variant: Variant,
    gf: GridFunctional,
    omega: Vec<Complex64>,
}

impl Problem {
    pub fn new(a: WeightFunction, spec: IncrementSpec, grid: FrequencyGrid, variant: Variant) -> Result<Self> {
        let gf = GridFunctional::new(&a, spec, variant)?;
        gf.check_grid(&grid)?;
        let omega = omega_discrete(spec, &grid)?;
        Ok(Problem { a, spec, grid, variant, gf, omega })
    }

    /// Dimension of the discretized operator (number of future cells).
    pub fn dim(&self) -> usize {
        self.gf.cells()
    }

    /// `D^τ A W^τ φ` with `W^τ` applied in the frequency domain.
    pub fn apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.size;
        if phi.len() > self.grid.half() {
            return invalid("kernel longer than half the grid");
        }
        let spectrum = fft::forward_real(&fft::padded(phi, n));
        let shaped: Vec<Complex64> = spectrum.iter().zip(&self.omega).map(|(s, o)| s * o).collect();
        let phi_tau: Vec<f64> = fft::inverse(&shaped).iter().map(|z| z.re).collect();
        Ok(self.gf.g(&phi_tau[..n / 2]))
    }

    /// Spectral characteristic and mean-square error for grid density values.
    pub fn solve_density(&self, values: &[f64]) -> Result<(CanonicalFactor, ExtrapolationResult)> {
        let factor = factorize_grid(values, &self.grid)?;
        let res = characteristic_from_factor(&self.a, &factor, self.spec, self.variant)?;
        Ok((factor, res))
    }

    pub fn mse_of_density(&self, values: &[f64]) -> Result<f64> {
        Ok(self.solve_density(values)?.1.mse)
    }

    /// `(1/2π) ∫ |A_τ - h|² |Ω_τ|² f dλ`: error of the estimator `h` under `f`.
    pub fn delta(&self, h: &[Complex64], f: &[f64]) -> f64 {
        let a_tau = self.gf.a_tau(&self.grid);
        let integrand: Vec<f64> =
            a_tau.iter().zip(h).zip(&self.omega).zip(f).map(|(((a, h), o), f)| (a - h).norm_sqr() * o.norm_sqr() * f).collect();
        self.grid.integrate(&integrand)
    }

    /// Error under `f` of the characteristic `h = A_τ - ρ/Φ⁰_τ` built on the
    /// factor of `f⁰`: `(1/2π) ∫ |ρ|² f/f⁰ dλ`. This form stays exact at the
    /// zeros of `Ω_τ`, where `h` itself is singular.
    pub fn delta_residual(&self, rho: &[Complex64], f: &[f64], f0: &[f64]) -> f64 {
        let integrand: Vec<f64> =
            rho.iter().zip(f).zip(f0).map(|((r, f), f0)| if *f0 > 0.0 { r.norm_sqr() * f / f0 } else { 0.0 }).collect();
        self.grid.integrate(&integrand)
    }

    fn power(&self, f: &[f64]) -> f64 {
        self.grid.integrate(f)
    }
}

/// Matrix of `D^τ A W^τ` acting on `dim` causal samples of `φ`.
pub fn build_operator_matrix(a: &WeightFunction, spec: IncrementSpec, grid: &FrequencyGrid, variant: Variant) -> Result<DMatrix<f64>> {
    let problem = Problem::new(a.clone(), spec, *grid, variant)?;
    operator_matrix(&problem, variant)
}

fn operator_matrix(problem: &Problem, variant: Variant) -> Result<DMatrix<f64>> {
    let taps = w_tau_taps(problem.spec, &problem.grid)?;
    let c = &problem.gf.c;
    let dim = problem.dim();
    let at = |j: usize| c.get(j).copied().unwrap_or(0.0);
    let hankel: Vec<f64> = (0..2 * dim.max(1) - 1).map(|s| taps.iter().enumerate().map(|(i, w)| w * at(s + 1 + i)).sum()).collect();
    Ok(DMatrix::from_fn(dim, dim, |k, u| match variant {
        Variant::HatT => hankel[dim - 1 - k + u],
        _ => hankel[k + u],
    }))
}

/// Real solution of `Mφ = α φ` with `‖φ‖² = P` (Euclidean norm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConEigen {
    pub phi: Vec<f64>,
    pub alpha: f64,
    pub residual: f64,
}

/// Eigenpair of largest `|α|`; see [`solve_coneig_with`].
pub fn solve_coneig(m: &DMatrix<f64>, p: f64) -> Result<ConEigen> {
    solve_coneig_with(m, p, |_| true)
}

/// Real eigenpairs ordered by decreasing `|α|`; the first whose vector passes
/// `accept` is returned, scaled to `‖φ‖² = P` with its first nonzero entry
/// positive.
pub fn solve_coneig_with(m: &DMatrix<f64>, p: f64, accept: impl Fn(&[f64]) -> bool) -> Result<ConEigen> {
    if p <= 0.0 || !p.is_finite() {
        return invalid(format!("normalization must be positive, got {p}"));
    }
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return invalid("operator matrix must be square and nonempty");
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("operator matrix has non-finite entries".into()));
    }
    for (alpha, vec) in real_eigenpairs(m)? {
        let mut phi: Vec<f64> = vec.iter().copied().collect();
        let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let peak = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let lead = phi.iter().find(|v| v.abs() > 1e-12 * peak).copied().unwrap_or(1.0);
        let scale = p.sqrt() / norm * lead.signum();
        phi.iter_mut().for_each(|v| *v *= scale);
        if !accept(&phi) {
            continue;
        }
        let x = DVector::from_column_slice(&phi);
        let residual = (m * &x - &x * alpha).norm() / x.norm();
        return Ok(ConEigen { phi, alpha, residual });
    }
    Err(Error::NoAdmissibleSolution("no real eigenvector yields an admissible factor".into()))
}

fn real_eigenpairs(m: &DMatrix<f64>) -> Result<Vec<(f64, DVector<f64>)>> {
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let asym = (m - m.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut pairs: Vec<(f64, DVector<f64>)> = if asym <= 1e-12 * scale {
        let eig = SymmetricEigen::new(m.clone());
        eig.eigenvalues.iter().enumerate().map(|(i, &l)| (l, eig.eigenvectors.column(i).into_owned())).collect()
    } else {
        let values = m.clone().complex_eigenvalues();
        let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
        values.iter().filter(|z| z.im.abs() <= tol).filter_map(|z| inverse_iteration(m, z.re).map(|v| (z.re, v))).collect()
    };
    pairs.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    Ok(pairs)
}

fn inverse_iteration(m: &DMatrix<f64>, alpha: f64) -> Option<DVector<f64>> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let shifted = m - DMatrix::identity(n, n) * (alpha + 1e-13 * scale);
    let lu = shifted.lu();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    for _ in 0..6 {
        let y = lu.solve(&x)?;
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        x = y / norm;
    }
    Some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub eigen_residual: f64,
    pub fixedpoint_residual: f64,
    pub iterations: usize,
    /// Relative error of the class's active constraint.
    pub power_error: f64,
    /// Eigen-branch value `ν₀P₀` (`α²·P`); zero when no eigen step ran.
    pub nu0: f64,
    /// Value `Δ(f⁰)` reached by the self-consistent density.
    pub nu0_plus: f64,
    pub branch: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxResult {
    pub class: String,
    pub grid: FrequencyGrid,
    /// Least favorable density, tabulated over the band.
    pub f0: SpectralDensity,
    /// `f⁰` on the grid (FFT order).
    pub f0_grid: Vec<f64>,
    pub phi0: SampledSignal,
    pub alpha: Complex64,
    /// Robust characteristic in FFT order.
    pub h0: Vec<Complex64>,
    pub delta0: f64,
    pub diagnostics: Diagnostics,
}

fn finish(problem: &Problem, class: &str, f: Vec<f64>, alpha: f64, diagnostics: Diagnostics) -> Result<MinimaxResult> {
    let (factor, res) = problem.solve_density(&f)?;
    let mut diagnostics = diagnostics;
    diagnostics.nu0_plus = res.mse;
    Ok(MinimaxResult {
        class: class.into(),
        grid: problem.grid,
        f0: SpectralDensity::from_grid(&problem.grid, &f),
        f0_grid: f,
        phi0: factor.phi,
        alpha: Complex64::new(alpha, 0.0),
        h0: res.h,
        delta0: res.mse,
        diagnostics,
    })
}

fn rel_l1(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let base: f64 = b.iter().map(|v| v.abs()).sum();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

/// `|r(λ)|²` for the factor of `f`.
fn r_modulus(problem: &Problem, f: &[f64]) -> Result<Vec<f64>> {
    let (_, res) = problem.solve_density(f)?;
    Ok(res.r_tau.iter().map(|z| z.norm_sqr()).collect())
}

/// `|dt Σ φ_j e^{-iλ t_j}|²` on the grid.
fn spectrum_of(phi: &[f64], grid: &FrequencyGrid) -> Vec<f64> {
    fft::forward_real(&fft::padded(phi, grid.size)).iter().map(|z| z.norm_sqr() * grid.dt * grid.dt).collect()
}

/// Whether `φ` is (up to sign) the canonical factor of its own spectrum.
fn is_minimum_phase(phi: &[f64], grid: &FrequencyGrid) -> bool {
    let Ok(factor) = factorize_grid(&spectrum_of(phi, grid), grid) else {
        return false;
    };
    let canon = &factor.phi.values;
    let dot: f64 = phi.iter().zip(canon).map(|(a, b)| a * b).sum();
    let sign = dot.signum();
    let err: f64 = canon.iter().enumerate().map(|(j, c)| (c - sign * phi.get(j).copied().unwrap_or(0.0)).powi(2)).sum();
    let norm: f64 = phi.iter().map(|v| v * v).sum();
    norm > 0.0 && err <= 1e-12 * norm
}

/// Least favorable density in `D₀ = {(1/2π)∫f ≤ P₀}`.
pub fn least_favorable_d0(problem: &Problem, p0: f64) -> Result<MinimaxResult> {
    least_favorable_d0_with(problem, p0, 1e-8, 200)
}

fn least_favorable_d0_with(problem: &Problem, p0: f64, tol: f64, max_iter: usize) -> Result<MinimaxResult> {
    if p0 <= 0.0 || !p0.is_finite() {
        return invalid(format!("P0 must be positive, got {p0}"));
    }
    let grid = problem.grid;
    let eig_variant = if problem.variant == Variant::HatT { Variant::FiniteT } else { problem.variant };
    let m = operator_matrix(problem, eig_variant)?;
    let mut diagnostics = Diagnostics::default();
    let (mut f, alpha) = match solve_coneig_with(&m, p0 / grid.dt, |phi| is_minimum_phase(phi, &grid)) {
        Ok(sol) => {
            diagnostics.eigen_residual = sol.residual;
            diagnostics.nu0 = sol.alpha * sol.alpha * p0;
            (spectrum_of(&sol.phi, &grid), sol.alpha)
        }
        Err(Error::NoAdmissibleSolution(_)) => {
            let sol = solve_coneig(&m, p0 / grid.dt)?;
            diagnostics.eigen_residual = sol.residual;
            (spectrum_of(&sol.phi, &grid), 0.0)
        }
        Err(e) => return Err(e),
    };
    let normalize = |f: &mut Vec<f64>| {
        let p = problem.power(f);
        f.iter_mut().for_each(|v| *v *= p0 / p);
    };
    normalize(&mut f);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let mut next = r_modulus(problem, &f)?;
        normalize(&mut next);
        residual = rel_l1(&next, &f);
        f = next;
        iterations += 1;
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(Error::IterationLimit { iterations, residual });
    }
    diagnostics.fixedpoint_residual = residual;
    diagnostics.iterations = iterations;
    diagnostics.power_error = (problem.power(&f) - p0).abs() / p0;
    let mut out = finish(problem, "D0", f, alpha, diagnostics)?;
    let d = &mut out.diagnostics;
    d.branch = if d.nu0 > 0.0 && (d.nu0 - d.nu0_plus).abs() <= 1e-6 * d.nu0_plus { "eigen" } else { "fixed-point" }.into();
    Ok(out)
}

/// Smallest `c² ≥ 0` with `power(clip(c²s)) = target`, by bisection.
fn match_power(target: f64, s: &[f64], clip: impl Fn(f64, usize) -> f64, power: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let apply = |c2: f64| -> Vec<f64> { s.iter().enumerate().map(|(k, v)| clip(c2 * v, k)).collect() };
    let p_at = |c2: f64| power(&apply(c2));
    let smax = s.iter().fold(0.0f64, |a, &v| a.max(v));
    if smax <= 0.0 {
        return apply(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0 / smax;
    let mut grow = 0;
    while p_at(hi) < target && grow < 2000 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (f_lo, f_hi) = (apply(lo), apply(hi));
    let (p_lo, p_hi) = (power(&f_lo), power(&f_hi));
    if p_hi == p_lo {
        return f_hi;
    }
    // the clipped power is piecewise linear in c², so a final interpolation is exact
    let w = ((target - p_lo) / (p_hi - p_lo)).clamp(0.0, 1.0);
    f_lo.iter().zip(&f_hi).map(|(a, b)| a + w * (b - a)).collect()
}

fn clipped_iteration(
    problem: &Problem,
    start: Vec<f64>,
    opts: SolverOptions,
    project: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, f64, usize)> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return invalid(format!("damping must lie in (0, 1], got {}", opts.damping));
    }
    let gamma = opts.damping;
    let mut f = start;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut target = f.clone();
    while iterations < opts.max_iterations {
        target = project(&r_modulus(problem, &f)?);
        let next: Vec<f64> = f.iter().zip(&target).map(|(a, b)| (1.0 - gamma) * a + gamma * b).collect();
        residual = rel_l1(&next, &f);
        f = next;
        iterations += 1;
        if residual <= opts.tolerance {
            break;
        }
    }
    if residual > opts.accept {
        return Err(Error::IterationLimit { iterations, residual });
    }
    Ok((target, residual, iterations))
}

/// Least favorable density in the band class `v ≤ f ≤ u`, `(1/2π)∫f = P₀`.
pub fn least_favorable_band(problem: &Problem, v: &SpectralDensity, u: &SpectralDensity, p0: f64) -> Result<MinimaxResult> {
    least_favorable_band_with(problem, v, u, p0, SolverOptions::default())
}

pub fn least_favorable_band_with(
    problem: &Problem,
    v: &SpectralDensity,
    u: &SpectralDensity,
    p0: f64,
    opts: SolverOptions,
) -> Result<MinimaxResult> {
    let grid = problem.grid;
    let (vg, ug) = (v.on_grid(&grid), u.on_grid(&grid));
    let (pv, pu) = (problem.power(&vg), problem.power(&ug));
    if vg.iter().zip(&ug).any(|(a, b)| a > b) {
        return invalid("band class needs v ≤ u on the grid");
    }
    if p0.is_nan() || p0 <= 0.0 || p0 < pv * (1.0 - 1e-12) || p0 > pu * (1.0 + 1e-12) {
        return invalid(format!("band class needs ∫v/2π = {pv} ≤ P0 = {p0} ≤ ∫u/2π = {pu}"));
    }
    let theta = if pu > pv { ((p0 - pv) / (pu - pv)).clamp(0.0, 1.0) } else { 0.0 };
    let start: Vec<f64> = vg.iter().zip(&ug).map(|(a, b)| a + theta * (b - a)).collect();
    let project = |s: &[f64]| match_power(p0, s, |x, k| x.clamp(vg[k], ug[k]), |f| problem.power(f));
    let (f, residual, iterations) = clipped_iteration(problem, start, opts, project)?;
    let diagnostics = Diagnostics {
        fixedpoint_residual: residual,
        iterations,
        power_error: (problem.power(&f) - p0).abs() / p0,
        branch: "fixed-point".into(),
        ..Default::default()
    };
    finish(problem, "band", f, 0.0, diagnostics)
}

/// Least favorable density in `D_δ = {(1/2π)∫|f - v| ≤ δ}`.
pub fn least_favorable_eps(problem: &Problem, v: &SpectralDensity, delta: f64) -> Result<MinimaxResult> {
    least_favorable_eps_with(problem, v, delta, SolverOptions::default())
}

pub fn least_favorable_eps_with(problem: &Problem, v: &SpectralDensity, delta: f64, opts: SolverOptions) -> Result<MinimaxResult> {
    if delta <= 0.0 || !delta.is_finite() {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    let grid = problem.grid;
    let vg = v.on_grid(&grid);
    if vg.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return invalid("v must be bounded and nonnegative on the grid");
    }
    let pv = problem.power(&vg);
    let p1 = pv + delta;
    let start: Vec<f64> = if pv > 0.0 { vg.iter().map(|x| x * p1 / pv).collect() } else { vec![p1; vg.len()] };
    let project = |s: &[f64]| match_power(p1, s, |x, k| x.max(vg[k]), |f| problem.power(f));
    let (f, residual, iterations) = clipped_iteration(problem, start, opts, project)?;
    let budget = problem.grid.integrate(&f.iter().zip(&vg).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>());
    let diagnostics = Diagnostics {
        fixedpoint_residual: residual,
        iterations,
        power_error: (budget - delta).abs() / delta,
        branch: "fixed-point".into(),
        ..Default::default()
    };
    finish(problem, "eps", f, 0.0, diagnostics)
}

/// Dispatches on the class.
pub fn least_favorable(problem: &Problem, class: &DensityClass, opts: SolverOptions) -> Result<MinimaxResult> {
    match class {
        DensityClass::D0 { p0 } => least_favorable_d0(problem, *p0),
        DensityClass::Band { v, u, p0 } => least_favorable_band_with(problem, v, u, *p0, opts),
        DensityClass::Eps { v, delta } => least_favorable_eps_with(problem, v, *delta, opts),
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random even mixture of Cauchy-type bumps on the grid.
fn random_bumps(grid: &FrequencyGrid, rng: &mut ChaCha8Rng, signed: bool) -> Vec<f64> {
    let count = rng.random_range(1..=4);
    let bumps: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let sign = if signed && rng.random::<bool>() { -1.0 } else { 1.0 };
            (rng.random_range(0.0..5.0), rng.random_range(0.2..3.0), sign * rng.random_range(0.1..1.0))
        })
        .collect();
    grid.lambdas()
        .iter()
        .map(|&l| bumps.iter().map(|(mu, s, w)| w * s * (1.0 / (s * s + (l - mu).powi(2)) + 1.0 / (s * s + (l + mu).powi(2)))).sum())
        .collect()
}

/// Draws an admissible density of the class on the grid (FFT order).
pub fn sample_density(class: &DensityClass, grid: &FrequencyGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let power = |f: &[f64]| grid.integrate(f);
    match class {
        DensityClass::D0 { p0 } => {
            let f = random_bumps(grid, rng, false);
            let scale = p0 * rng.random_range(0.5..=1.0) / power(&f);
            f.iter().map(|v| v * scale).collect()
        }
        DensityClass::Band { v, u, p0 } => {
            let (vg, ug) = (v.on_grid(grid), u.on_grid(grid));
            let theta = random_bumps(grid, rng, false);
            let peak = theta.iter().fold(0.0f64, |a, &t| a.max(t));
            let shape: Vec<f64> = theta.iter().map(|t| t / peak).collect();
            match_power(*p0, &shape, |x, k| vg[k] + x.min(1.0) * (ug[k] - vg[k]), power)
        }
        DensityClass::Eps { v, delta } => {
            let vg = v.on_grid(grid);
            let p = random_bumps(grid, rng, true);
            let l1 = power(&p.iter().map(|x| x.abs()).collect::<Vec<_>>());
            let scale = delta * rng.random_range(0.0..=1.0) / l1;
            vg.iter().zip(&p).map(|(a, b)| (a + scale * b).max(0.0)).collect()
        }
    }
}

/// Worst-case slacks of the saddle-point inequalities
/// `Δ(h; f⁰) ≥ Δ(h⁰; f⁰) ≥ Δ(h⁰; f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport {
    /// `Δ(h⁰; f⁰)`
    pub delta0: f64,
    /// `min Δ(h⁰; f⁰) - Δ(h⁰; f)` over sampled admissible `f`.
    pub right_slack: f64,
    /// `min Δ(h; f⁰) - Δ(h⁰; f⁰)` over perturbed characteristics.
    pub left_slack: f64,
    /// `min Δ(f⁰) - Δ(f)` with `Δ(f)` the optimal error at the sampled `f`.
    pub maximality_slack: f64,
    pub samples: usize,
    /// Sampled densities whose optimal error could not be evaluated.
    pub skipped: usize,
    pub pass: bool,
}

pub fn verify_saddle(problem: &Problem, result: &MinimaxResult, class: &DensityClass, n_samples: usize, seed: u64) -> Result<SaddleReport> {
    verify_saddle_with(problem, result, class, n_samples, seed, Execution::default())
}

pub fn verify_saddle_with(
    problem: &Problem,
    result: &MinimaxResult,
    class: &DensityClass,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<SaddleReport> {
    let grid = problem.grid;
    if result.grid != grid || result.h0.len() != grid.size {
        return invalid("minimax result was computed on a different grid");
    }
    let f0 = &result.f0_grid;
    let (_, res0) = problem.solve_density(f0)?;
    let r0 = if problem.variant == Variant::HatT { problem.gf.unreflect(&res0.r_tau, &grid) } else { res0.r_tau };
    let d00 = problem.delta_residual(&r0, f0, f0);

    let right: Vec<(f64, Option<f64>)> = map_indices(exec, n_samples, |i| {
        let mut rng = rng_for(seed, 2 * i as u64);
        let f = sample_density(class, &grid, &mut rng);
        let mse = match problem.mse_of_density(&f) {
            Ok(v) => Some(v),
            // no causal factor: the process is deterministic and its optimal error is 0
            Err(Error::Factorization(_)) => Some(0.0),
            Err(_) => None,
        };
        (d00 - problem.delta_residual(&r0, &f, f0), mse.map(|m| result.delta0 - m))
    });
    let left: Vec<f64> = map_indices(exec, n_samples, |i| {
        let mut rng = rng_for(seed, 2 * i as u64 + 1);
        let len = rng.random_range(1..=grid.size / 4);
        let q: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let big_q: Vec<Complex64> = fft::forward_real(&fft::padded(&q, grid.size)).iter().map(|z| z * grid.dt).collect();
        let energy = grid.integrate(&big_q.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
        let eps = rng.random_range(0.01..=0.1) * (d00 / energy).sqrt();
        let rho: Vec<Complex64> = r0.iter().zip(&big_q).map(|(r, q)| r - q * eps).collect();
        problem.delta_residual(&rho, f0, f0) - d00
    });
    let right_slack = right.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let maximality: Vec<f64> = right.iter().filter_map(|s| s.1).collect();
    let maximality_slack = maximality.iter().copied().fold(f64::INFINITY, f64::min);
    let left_slack = left.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = -1e-6 * d00;
    Ok(SaddleReport {
        delta0: d00,
        right_slack,
        left_slack,
        maximality_slack,
        samples: n_samples,
        skipped: n_samples - maximality.len(),
        pass: right_slack >= tol && left_slack >= tol && maximality_slack >= -1e-6 * result.delta0,
    })
}
