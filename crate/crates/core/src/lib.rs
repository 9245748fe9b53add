//! Mean-square optimal and minimax-robust linear extrapolation of integral
//! functionals of random processes with stationary nth increments.
//!
//! The library works on a uniform time grid with step `dt` and the matching
//! discrete frequency grid `λ_k = 2πk/(N·dt)`. Transforms follow
//! `X(λ) = ∫ e^{-iλt} x(t) dt`, so time-domain norms carry no `2π` and
//! frequency-domain integrals carry `1/(2π)`.
//!
//! Modules:
//! - [`increments`]: increment calculus, exact coefficients, structural function.
//! - [`spectral`]: densities, canonical factorization, the increment transfer.
//! - [`extrapolate`]: spectral characteristics, mean-square errors, time-domain estimators.
//! - [`minimax`]: least favorable densities and saddle-point checks.
//! - [`montecarlo`]: simulation and empirical verification.

pub mod error;
pub mod extrapolate;
pub mod increments;
pub mod minimax;
pub mod montecarlo;
pub mod par;
pub mod signal;
pub mod spectral;

mod fft;
mod quad;

pub use error::{Error, Result};
pub use increments::IncrementSpec;
pub use signal::SampledSignal;
pub use spectral::{FrequencyGrid, SpectralDensity};
