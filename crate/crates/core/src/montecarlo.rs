//! Simulation of processes with stationary nth increments through the
//! one-sided moving-average representation, and empirical checks of the
//! theoretical mean-square errors.
//!
//! Innovations are Gaussian with variance `dt` per cell. Each replication
//! draws from its own ChaCha stream keyed by `(seed, rep)`, so results do not
//! depend on scheduling or thread count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::extrapolate::{characteristic_from_factor, value_from_factor, FunctionalEstimator, ValueEstimator, Variant, WeightFunction};
use crate::fft;
use crate::increments::{binom_f64, invert_increment, IncrementSpec};
use crate::par::{map_indices, pairwise_mean, Execution};
use crate::signal::SampledSignal;
use crate::spectral::{apply_unit_step, factorize, CanonicalFactor, FrequencyGrid, IncrementFactor, SpectralDensity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationConfig {
    /// Samples per path after burn-in (for verification: the observation window).
    pub path_length: usize,
    pub burn_in: usize,
    pub n_reps: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl SimulationConfig {
    pub fn new(path_length: usize, burn_in: usize, n_reps: usize, seed: u64) -> Self {
        SimulationConfig { path_length, burn_in, n_reps, seed, execution: Execution::default() }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn check(&self, kernel: &[f64]) -> Result<()> {
        if self.path_length == 0 || self.burn_in == 0 {
            return invalid("path length and burn-in must be positive");
        }
        if self.n_reps < 100 {
            return invalid(format!("at least 100 replications are required, got {}", self.n_reps));
        }
        let support = energy_support(kernel, 0.99);
        if self.burn_in < 5 * support {
            return invalid(format!("burn-in of {} samples is shorter than 5× the 99% energy support ({support})", self.burn_in));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct McReport {
    pub empirical_mse: f64,
    pub theoretical_mse: f64,
    pub stderr: f64,
    pub n_reps: usize,
    pub z_score: f64,
    pub orthogonality_max_z: f64,
}

/// Mean and standard error of a sample.
fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = pairwise_mean(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if x.len() > 1 { pairwise_mean(&dev) * n / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

fn z_of(empirical: f64, theoretical: f64, stderr: f64) -> f64 {
    (empirical - theoretical) / stderr.max(f64::MIN_POSITIVE)
}

fn report(squares: &[f64], theoretical: f64, orthogonality_max_z: f64) -> McReport {
    let (empirical, stderr) = mean_stderr(squares);
    let stderr = stderr.max(f64::MIN_POSITIVE);
    McReport {
        empirical_mse: empirical,
        theoretical_mse: theoretical,
        stderr,
        n_reps: squares.len(),
        z_score: z_of(empirical, theoretical, stderr),
        orthogonality_max_z,
    }
}

/// Number of leading samples holding the share `q` of the kernel energy.
fn energy_support(kernel: &[f64], q: f64) -> usize {
    let total: f64 = kernel.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (j, v) in kernel.iter().enumerate() {
        acc += v * v;
        if acc >= q * total {
            return j + 1;
        }
    }
    kernel.len()
}

/// Kernel trimmed where its energy tail drops below `1e-26` of the total.
fn trimmed(kernel: &[f64]) -> &[f64] {
    let total: f64 = kernel.iter().map(|v| v * v).sum();
    let mut tail = 0.0;
    let mut len = kernel.len();
    while len > 1 && tail + kernel[len - 1].powi(2) <= 1e-26 * total {
        tail += kernel[len - 1].powi(2);
        len -= 1;
    }
    &kernel[..len]
}

fn rng_for(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn innovations(rng: &mut ChaCha8Rng, len: usize, dt: f64) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// Causal FFT convolution with a fixed kernel.
struct Convolver {
    size: usize,
    kernel_len: usize,
    spectrum: Vec<Complex64>,
}

impl Convolver {
    fn new(kernel: &[f64], input_len: usize) -> Self {
        let size = (input_len + kernel.len()).next_power_of_two();
        Convolver { size, kernel_len: kernel.len(), spectrum: fft::forward_real(&fft::padded(kernel, size)) }
    }

    /// `y_j = Σ_k kernel[k] x_{j-k}` for `j ≥ kernel_len - 1` (full history only).
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let xs = fft::forward_real(&fft::padded(x, self.size));
        let prod: Vec<Complex64> = xs.iter().zip(&self.spectrum).map(|(a, b)| a * b).collect();
        fft::inverse(&prod)[self.kernel_len - 1..x.len()].iter().map(|z| z.re).collect()
    }
}

/// Independent paths of `ξ^{(n)}(t, τ)`, each `path_length` samples long.
pub fn simulate_increments(factor: &IncrementFactor, cfg: &SimulationConfig) -> Result<Vec<SampledSignal>> {
    let phi = &factor.phi_tau.values;
    cfg.check(phi)?;
    let kernel = trimmed(phi);
    let burn = cfg.burn_in.max(kernel.len());
    let total = burn + cfg.path_length;
    let dt = factor.grid.dt;
    let conv = Convolver::new(kernel, total);
    map_indices(cfg.execution, cfg.n_reps, |rep| {
        let eps = innovations(&mut rng_for(cfg.seed, rep), total, dt);
        let x = conv.apply(&eps);
        SampledSignal::new(0.0, dt, x[x.len() - cfg.path_length..].to_vec())
    })
    .into_iter()
    .collect()
}

/// `ξ` from its increments and the preceding values; see [`invert_increment`].
pub fn reconstruct_process(incs: &SampledSignal, initial: &[f64], spec: IncrementSpec) -> Result<SampledSignal> {
    invert_increment(incs, initial, spec)
}

const MOMENT_LAGS: [usize; 5] = [1, 2, 4, 8, 16];

/// Marginal variance of simulated increments against `∫|φ_τ|²`; the
/// orthogonality field carries the largest `|z|` of the autocovariance
/// checks at lags 1, 2, 4, 8 and 16 samples.
pub fn moment_check(factor: &IncrementFactor, cfg: &SimulationConfig) -> Result<McReport> {
    if cfg.path_length <= MOMENT_LAGS[4] {
        return invalid(format!("paths must be longer than {} samples", MOMENT_LAGS[4]));
    }
    let paths = simulate_increments(factor, cfg)?;
    let dt = factor.grid.dt;
    let phi = &factor.phi_tau.values;
    let last = cfg.path_length - 1;
    let squares: Vec<f64> = paths.iter().map(|p| p.values[last].powi(2)).collect();
    let theo = dt * phi.iter().map(|v| v * v).sum::<f64>();
    let mut max_z: f64 = 0.0;
    for lag in MOMENT_LAGS {
        let prods: Vec<f64> = paths.iter().map(|p| p.values[last] * p.values[last - lag]).collect();
        let cov = dt * phi.iter().zip(&phi[lag..]).map(|(a, b)| a * b).sum::<f64>();
        let (m, se) = mean_stderr(&prods);
        max_z = max_z.max(z_of(m, cov, se).abs());
    }
    Ok(report(&squares, theo, max_z))
}

/// One simulated scenario: `ξ` on cells `-window..=future` with `t = 0` at
/// index `window`, plus the innovations of the observed cells.
struct Scenario {
    xi: Vec<f64>,
    eps: Vec<f64>,
}

struct Simulator {
    n: u32,
    dt: f64,
    window: usize,
    future: usize,
    burn: usize,
    conv: Convolver,
}

impl Simulator {
    fn new(factor: &CanonicalFactor, n: u32, window: usize, future: usize, cfg: &SimulationConfig) -> Result<Self> {
        let unit = apply_unit_step(factor, n)?;
        let psi = trimmed(&unit.phi_tau.values).to_vec();
        cfg.check(&psi)?;
        let burn = cfg.burn_in.max(psi.len());
        let total = burn + window + 1 + future;
        Ok(Simulator { n, dt: factor.grid.dt, window, future, burn, conv: Convolver::new(&psi, total + psi.len() - 1) })
    }

    fn draw(&self, seed: u64, rep: usize) -> Result<Scenario> {
        let k = self.conv.kernel_len;
        let cells = self.window + 1 + self.future;
        let total = self.burn + cells + k - 1;
        let eps_all = innovations(&mut rng_for(seed, rep), total, self.dt);
        // unit-step increments on cells -window+n..=future
        let u = self.conv.apply(&eps_all);
        let n = self.n as usize;
        let u = &u[u.len() - (cells - n)..];
        let incs = SampledSignal::new((n as f64 - self.window as f64) * self.dt, self.dt, u.to_vec())?;
        let xi = invert_increment(&incs, &vec![0.0; n], IncrementSpec::new(self.n, self.dt)?)?.values;
        let eps = eps_all[eps_all.len() - cells..eps_all.len() - self.future].to_vec();
        Ok(Scenario { xi, eps })
    }

    fn observed(&self, s: &Scenario) -> Result<SampledSignal> {
        SampledSignal::new(-(self.window as f64) * self.dt, self.dt, s.xi[..=self.window].to_vec())
    }
}

/// Paths of `ξ` observed on `[-window·dt, 0]`, rebuilt from simulated
/// step-`dt` increments with zero initial values.
pub fn simulate_process(factor: &CanonicalFactor, n: u32, window: usize, cfg: &SimulationConfig) -> Result<Vec<SampledSignal>> {
    if window < n as usize {
        return invalid("window must exceed the increment order");
    }
    let sim = Simulator::new(factor, n, window, 0, cfg)?;
    map_indices(cfg.execution, cfg.n_reps, |rep| sim.observed(&sim.draw(cfg.seed, rep)?)).into_iter().collect()
}

/// Largest `|z|` of the covariances between the error and ten observed
/// increments spread over the window.
fn orthogonality(errors: &[f64], probes: &[Vec<f64>]) -> f64 {
    let mut max_z: f64 = 0.0;
    for p in probes {
        let prods: Vec<f64> = errors.iter().zip(p).map(|(e, x)| e * x).collect();
        let (m, se) = mean_stderr(&prods);
        if se > 0.0 {
            max_z = max_z.max((m / se).abs());
        }
    }
    max_z
}

fn probe_indices(window: usize, span: usize) -> Vec<usize> {
    let usable = window - span;
    (0..10).map(|p| window - p * usable / 10).collect()
}

fn increment_at(xi: &[f64], idx: usize, coef: &[f64], m: usize) -> f64 {
    coef.iter().enumerate().map(|(l, c)| c * xi[idx - l * m]).sum()
}

/// Empirical error of the predictor of `ξ^{(n)}(u, τ)` against the theory.
pub fn mc_verify_value(u: f64, f: &SpectralDensity, spec: IncrementSpec, grid: &FrequencyGrid, cfg: &SimulationConfig) -> Result<McReport> {
    let factor = factorize(f, grid)?;
    let theory = value_from_factor(u, &factor, spec)?;
    let est = ValueEstimator::new(u, &factor, spec)?;
    let m = spec.steps(grid.dt)?;
    let steps = (u / grid.dt).round() as usize;
    let window = est.min_window().max(cfg.path_length);
    let sim = Simulator::new(&factor, spec.n, window, steps, cfg)?;
    let coef = binom_f64(spec.n);
    let probes = probe_indices(window, spec.n as usize * m);
    let rows: Vec<Result<(f64, Vec<f64>)>> = map_indices(cfg.execution, cfg.n_reps, |rep| {
        let s = sim.draw(cfg.seed, rep)?;
        let truth = increment_at(&s.xi, window + steps, &coef, m);
        let err = truth - est.estimate_increment(&sim.observed(&s)?)?;
        Ok((err, probes.iter().map(|&j| increment_at(&s.xi, j, &coef, m)).collect()))
    });
    summarize(rows, theory.mse)
}

fn summarize(rows: Vec<Result<(f64, Vec<f64>)>>, theoretical: f64) -> Result<McReport> {
    let rows: Vec<(f64, Vec<f64>)> = rows.into_iter().collect::<Result<_>>()?;
    let errors: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let probes: Vec<Vec<f64>> = (0..rows.first().map_or(0, |r| r.1.len())).map(|p| rows.iter().map(|r| r.1[p]).collect()).collect();
    let squares: Vec<f64> = errors.iter().map(|e| e * e).collect();
    Ok(report(&squares, theoretical, orthogonality(&errors, &probes)))
}

/// Empirical error of the time-domain estimate of `Aξ` (or `A_Tξ`).
pub fn mc_verify_functional(
    a: &WeightFunction,
    f: &SpectralDensity,
    spec: IncrementSpec,
    grid: &FrequencyGrid,
    cfg: &SimulationConfig,
    variant: Variant,
) -> Result<McReport> {
    let factor = factorize(f, grid)?;
    let theory = characteristic_from_factor(a, &factor, spec, variant)?;
    let est = FunctionalEstimator::new(a, &factor, spec, variant)?;
    let m = spec.steps(grid.dt)?;
    let window = est.min_window().max(cfg.path_length);
    let future = a.last();
    let sim = Simulator::new(&factor, spec.n, window, future, cfg)?;
    let coef = binom_f64(spec.n);
    let probes = probe_indices(window, spec.n as usize * m);
    let alpha = est.alpha().to_vec();
    let rows: Vec<Result<(f64, Vec<f64>)>> = map_indices(cfg.execution, cfg.n_reps, |rep| {
        let s = sim.draw(cfg.seed, rep)?;
        let truth: f64 = alpha.iter().enumerate().map(|(j, w)| w * s.xi[window + j]).sum();
        let err = truth - est.estimate(&sim.observed(&s)?)?;
        Ok((err, probes.iter().map(|&j| increment_at(&s.xi, j, &coef, m)).collect()))
    });
    summarize(rows, theory.mse)
}

/// Same as [`mc_verify_functional`] but projecting the true innovations,
/// which isolates the projection weights from the deconvolution step.
pub fn mc_verify_functional_oracle(
    a: &WeightFunction,
    f: &SpectralDensity,
    spec: IncrementSpec,
    grid: &FrequencyGrid,
    cfg: &SimulationConfig,
    variant: Variant,
) -> Result<McReport> {
    let factor = factorize(f, grid)?;
    let theory = characteristic_from_factor(a, &factor, spec, variant)?;
    let est = FunctionalEstimator::new(a, &factor, spec, variant)?;
    let window = est.min_window().max(cfg.path_length);
    let sim = Simulator::new(&factor, spec.n, window, a.last(), cfg)?;
    let alpha = est.alpha().to_vec();
    let rows: Vec<Result<(f64, Vec<f64>)>> = map_indices(cfg.execution, cfg.n_reps, |rep| {
        let s = sim.draw(cfg.seed, rep)?;
        let truth: f64 = alpha.iter().enumerate().map(|(j, w)| w * s.xi[window + j]).sum();
        let eps_rev: Vec<f64> = s.eps.iter().rev().copied().collect();
        let err = truth - est.estimate_with_innovations(&sim.observed(&s)?, &eps_rev)?;
        Ok((err, Vec::new()))
    });
    summarize(rows, theory.mse)
}
