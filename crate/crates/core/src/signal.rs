use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Real samples on the uniform grid `t0 + j·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return invalid(format!("grid step must be positive, got {dt}"));
        }
        if !t0.is_finite() {
            return invalid("grid origin must be finite");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("sample {i} is not finite"));
        }
        Ok(SampledSignal { t0, dt, values })
    }

    /// Samples `f(t0 + j·dt)` for `j < len`.
    pub fn from_fn(t0: f64, dt: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..len).map(|j| f(t0 + j as f64 * dt)).collect();
        Self::new(t0, dt, values)
    }

    pub fn zeros(t0: f64, dt: f64, len: usize) -> Self {
        SampledSignal { t0, dt, values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.len().saturating_sub(1))
    }

    /// Index of the grid point at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let j = x.round();
        if (x - j).abs() > 1e-6 || j < 0.0 || j as usize >= self.len() {
            None
        } else {
            Some(j as usize)
        }
    }

    /// `dt · Σ x_j²`.
    pub fn energy(&self) -> f64 {
        self.dt * self.values.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Number of grid steps in `tau`, requiring an integer multiple of `dt`.
pub fn steps_of(tau: f64, dt: f64) -> Result<usize> {
    let x = tau / dt;
    let m = x.round();
    if m < 1.0 || (x - m).abs() > 1e-9 * x.max(1.0) {
        return invalid(format!("step {tau} is not a positive integer multiple of the grid step {dt}"));
    }
    Ok(m as usize)
}
