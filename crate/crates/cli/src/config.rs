use std::path::{Path, PathBuf};

use clap::Args;
use increx::extrapolate::Variant;
use increx::FrequencyGrid;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_GRID_SIZE: usize = 4096;

/// Options shared by every subcommand. Each may also come from `--config`;
/// flags take precedence over the file, the file over the defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Opts {
    /// JSON file with any of these options (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Spectral density file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<PathBuf>,
    /// Weight function file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<PathBuf>,
    /// Admissible density class file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<PathBuf>,
    /// Envelope written by `minimax` (for `verify --kind saddle`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<PathBuf>,
    /// Observed path as CSV with columns `t,value`, ending at t = 0.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Band edge π/dt; an alternative to --dt.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    /// Truncation time for infinite-horizon weights.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Increment order.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    /// Increment step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// infinite, finiteT or hatT.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    /// Lead time of the single-value problem.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, env = "INCREX_THREADS")]
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_length: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    /// Monte Carlo replications.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    /// Density samples and characteristic perturbations of the saddle check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// functional, value or saddle (for `verify`).
    #[arg(long, value_parser = ["functional", "value", "saddle"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Also write every simulated path to paths.csv.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub dump_paths: bool,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Opts {
    /// Applies the config file (if any) and the defaults.
    pub fn resolve(mut self) -> Result<Opts, CliError> {
        if let Some(path) = self.config.clone() {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let mut file: Opts = serde_json::from_str(&text).map_err(|e| CliError::parse(&path, e))?;
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [&mut file.out, &mut file.density, &mut file.weight, &mut file.class, &mut file.result, &mut file.path] {
                if let Some(rel) = p.as_mut().filter(|r| r.is_relative()) {
                    *rel = base.join(&*rel);
                }
            }
            merge_fields!(self, file; out, density, weight, class, result, path, dt, lambda_max, grid_size, t_max, n, tau,
                variant, u, seed, threads, path_length, burn_in, reps, samples, kind);
            self.dump_paths |= file.dump_paths;
        }
        match (self.dt, self.lambda_max) {
            (Some(dt), Some(lm)) if (std::f64::consts::PI / dt - lm).abs() > 1e-9 * lm => {
                return Err(CliError::Validation(format!("--dt {dt} and --lambda-max {lm} disagree")));
            }
            (None, Some(lm)) if lm > 0.0 => self.dt = Some(std::f64::consts::PI / lm),
            (None, _) => self.dt = Some(DEFAULT_DT),
            _ => {}
        }
        self.lambda_max = None;
        self.grid_size.get_or_insert(DEFAULT_GRID_SIZE);
        self.n.get_or_insert(1);
        self.tau.get_or_insert(1.0);
        self.variant.get_or_insert_with(|| "finiteT".into());
        self.seed.get_or_insert(0);
        self.path_length.get_or_insert(400);
        self.burn_in.get_or_insert(2000);
        self.reps.get_or_insert(2000);
        self.samples.get_or_insert(50);
        Ok(self)
    }

    pub fn grid(&self) -> Result<FrequencyGrid, CliError> {
        Ok(FrequencyGrid::new(self.grid_size.unwrap_or(DEFAULT_GRID_SIZE), self.dt.unwrap_or(DEFAULT_DT))?)
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        let name = self.variant.as_deref().unwrap_or("finiteT");
        serde_json::from_value(serde_json::Value::String(name.into()))
            .map_err(|_| CliError::Validation(format!("unknown variant {name:?} (expected infinite, finiteT or hatT)")))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or_else(|| CliError::Validation(format!("--{flag} is required")))
    }
}
