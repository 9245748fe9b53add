mod config;
mod output;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use increx::extrapolate::{characteristic_from_factor, value_from_factor, FunctionalEstimator, ValueEstimator, WeightFunction};
use increx::minimax::{least_favorable, verify_saddle_with, DensityClass, MinimaxResult, Problem, SolverOptions};
use increx::montecarlo::{mc_verify_functional, mc_verify_value, moment_check, simulate_increments, McReport, SimulationConfig};
use increx::par::Execution;
use increx::spectral::{apply_w_tau, factorize, validate_density_on, winding_number, CanonicalFactor};
use increx::{FrequencyGrid, IncrementSpec, SampledSignal, SpectralDensity};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use config::Opts;
use output::{num, Artifacts};

#[derive(Debug, Parser)]
#[command(
    name = "increx",
    version,
    about = "Optimal and minimax-robust extrapolation of functionals of processes with stationary increments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check density, weight and class files.
    Validate(Opts),
    /// Canonical factor of a density: factor.json, phi.csv, Phi.csv, phi_tau.csv.
    Factorize(Opts),
    /// Optimal estimate of a functional: estimate.json, h.csv, v.csv.
    Estimate(Opts),
    /// Optimal estimate of a single increment value: estimate-value.json, h.csv.
    EstimateValue(Opts),
    /// Least favorable density: minimax.json, f0.csv, saddle.json.
    Minimax(Opts),
    /// Simulated increments with moment checks: simulate.json.
    Simulate(Opts),
    /// Monte Carlo or saddle-point verification: verify.json.
    Verify(Opts),
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Lib(increx::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Validation(format!("{}: {e}", path.display()))
    }

    pub fn parse(path: &Path, e: serde_json::Error) -> Self {
        CliError::Validation(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Lib(e) if e.is_validation() => 2,
            _ => 3,
        }
    }

    fn to_json(&self) -> Value {
        let (kind, message) = match self {
            CliError::Validation(m) => ("validation", m.clone()),
            CliError::Numerical(m) => ("numerical", m.clone()),
            CliError::Lib(e) => (e.kind(), e.to_string()),
        };
        json!({"level": "error", "kind": kind, "message": message, "exitCode": self.exit_code()})
    }
}

impl From<increx::Error> for CliError {
    fn from(e: increx::Error) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))
}

fn load_density(opts: &Opts) -> Result<SpectralDensity> {
    read_json(opts.require(&opts.density, "density")?)
}

fn load_weight(opts: &Opts) -> Result<WeightFunction> {
    let path = opts.require(&opts.weight, "weight")?;
    let mut raw: Value = read_json(path)?;
    if let (Some(t_max), Some(obj)) = (opts.t_max, raw.as_object_mut()) {
        if obj.get("horizon").and_then(Value::as_str) == Some("inf") {
            obj.insert("t_max".into(), json!(t_max));
        }
    }
    serde_json::from_value(raw).map_err(|e| CliError::parse(path, e))
}

fn load_class(opts: &Opts) -> Result<DensityClass> {
    read_json(opts.require(&opts.class, "class")?)
}

fn load_path(opts: &Opts) -> Result<Option<SampledSignal>> {
    let Some(path) = opts.path.as_deref() else { return Ok(None) };
    let bad = |m: String| CliError::Validation(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in reader.deserialize::<(f64, f64)>() {
        rows.push(rec.map_err(|e| bad(e.to_string()))?);
    }
    if rows.len() < 2 {
        return Err(bad("a path needs at least two samples".into()));
    }
    let dt = rows[1].0 - rows[0].0;
    let uniform = rows.windows(2).all(|w| ((w[1].0 - w[0].0) - dt).abs() <= 1e-9 * dt.abs());
    if dt.is_nan() || dt <= 0.0 || !uniform {
        return Err(bad("sample times must be increasing and uniform".into()));
    }
    Ok(Some(SampledSignal::new(rows[0].0, dt, rows.into_iter().map(|r| r.1).collect())?))
}

fn spec(opts: &Opts) -> Result<IncrementSpec> {
    Ok(IncrementSpec::new(opts.n.unwrap_or(1), opts.tau.unwrap_or(1.0))?)
}

fn execution(opts: &Opts) -> Execution {
    if opts.threads == Some(1) {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn sim_config(opts: &Opts) -> SimulationConfig {
    SimulationConfig::new(opts.path_length.unwrap_or(400), opts.burn_in.unwrap_or(2000), opts.reps.unwrap_or(2000), opts.seed.unwrap_or(0))
        .with_execution(execution(opts))
}

fn envelope(command: &str, opts: &Opts, result: impl Serialize) -> Value {
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": opts,
        "result": result,
    })
}

/// Frequency-ordered rows `(λ, columns...)` of grid quantities in FFT order.
fn spectrum_rows<'a>(grid: &'a FrequencyGrid, cols: impl Fn(usize) -> Vec<f64> + 'a) -> impl Iterator<Item = Vec<f64>> + 'a {
    grid.sorted_bins().into_iter().map(move |k| {
        let mut row = vec![grid.lambda(k)];
        row.extend(cols(k));
        row
    })
}

fn signal_rows(s: &SampledSignal) -> impl Iterator<Item = Vec<f64>> + '_ {
    s.values.iter().enumerate().map(|(j, &v)| vec![s.t(j), v])
}

fn mc_pass(r: &McReport) -> bool {
    r.z_score.abs() <= 3.0 && r.orthogonality_max_z <= 3.0
}

fn validate(opts: &Opts, out: &mut Artifacts) -> Result<()> {
    let grid = opts.grid()?;
    let mut result = serde_json::Map::new();
    let mut pass = true;
    if opts.density.is_some() {
        let report = validate_density_on(&load_density(opts)?, &grid);
        pass &= report.pass;
        result.insert("density".into(), json!(report));
    }
    if opts.weight.is_some() {
        let w = load_weight(opts)?;
        result.insert("weight".into(), json!({"samples": w.a.len(), "tMax": w.t_max(), "finite": w.horizon.is_finite()}));
        opts.variant()?.check(&w)?;
    }
    if opts.class.is_some() {
        let class = load_class(opts)?;
        let densities: Vec<&SpectralDensity> = match &class {
            DensityClass::D0 { .. } => vec![],
            DensityClass::Band { v, u, .. } => vec![v, u],
            DensityClass::Eps { v, .. } => vec![v],
        };
        let ok = densities.iter().all(|d| validate_density_on(d, &grid).pass);
        pass &= ok;
        result.insert("class".into(), json!({"name": class.name(), "densitiesPass": ok}));
    }
    if result.is_empty() {
        return Err(CliError::Validation("nothing to validate: pass --density, --weight or --class".into()));
    }
    result.insert("status".into(), json!(if pass { "pass" } else { "fail" }));
    out.json("validate.json", &envelope("validate", opts, &result))?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Validation("inputs failed validation; see validate.json".into()))
    }
}

fn factor_of(opts: &Opts) -> Result<(FrequencyGrid, CanonicalFactor)> {
    let grid = opts.grid()?;
    let factor = factorize(&load_density(opts)?, &grid)?;
    Ok((grid, factor))
}

fn cmd_factorize(opts: &Opts, out: &mut Artifacts) -> Result<()> {
    let (grid, factor) = factor_of(opts)?;
    let inc = apply_w_tau(&factor, spec(opts)?)?;
    let result = json!({
        "power": grid.integrate(&factor.f_grid),
        "roundtripError": factor.roundtrip_error,
        "negativeTimeEnergy": factor.negative_time_energy,
        "winding": winding_number(&factor.big_phi),
        "incrementNegativeTimeEnergy": inc.negative_time_energy,
    });
    out.json("factor.json", &envelope("factorize", opts, result))?;
    out.csv("phi.csv", &["t", "phi"], signal_rows(&factor.phi))?;
    out.csv("phi_tau.csv", &["t", "phi_tau"], signal_rows(&inc.phi_tau))?;
    let b = &factor.big_phi;
    out.csv(
        "Phi.csv",
        &["lambda", "re", "im", "abs2", "f"],
        spectrum_rows(&grid, |k| vec![b[k].re, b[k].im, b[k].norm_sqr(), factor.f_grid[k]]),
    )
}

fn cmd_estimate(opts: &Opts, out: &mut Artifacts) -> Result<()> {
    let (grid, factor) = factor_of(opts)?;
    let a = load_weight(opts)?;
    let (spec, variant) = (spec(opts)?, opts.variant()?);
    let res = characteristic_from_factor(&a, &factor, spec, variant)?;
    let estimate = match load_path(opts)? {
        Some(path) => Some(FunctionalEstimator::new(&a, &factor, spec, variant)?.estimate(&path)?),
        None => None,
    };
    let result = json!({
        "variant": res.variant,
        "mse": res.mse,
        "mseSpectral": res.mse_spectral,
        "tMax": res.t_max,
        "estimate": estimate,
    });
    out.json("estimate.json", &envelope("estimate", opts, result))?;
    out.csv("h.csv", &["lambda", "re", "im"], spectrum_rows(&grid, |k| vec![res.h[k].re, res.h[k].im]))?;
    out.csv("v.csv", &["t", "v"], signal_rows(&res.v_tau))
}

fn cmd_estimate_value(opts: &Opts, out: &mut Artifacts) -> Result<()> {
    let (grid, factor) = factor_of(opts)?;
    let u = opts.u.ok_or_else(|| CliError::Validation("--u is required".into()))?;
    let spec = spec(opts)?;
    let res = value_from_factor(u, &factor, spec)?;
    let (increment, process) = match load_path(opts)? {
        Some(path) => {
            let est = ValueEstimator::new(u, &factor, spec)?;
            let process = if u < spec.tau { Some(est.estimate_process(&path)?) } else { None };
            (Some(est.estimate_increment(&path)?), process)
        }
        None => (None, None),
    };
    let result = json!({"u": u, "mse": res.mse, "incrementEstimate": increment, "processEstimate": process});
    out.json("estimate-value.json", &envelope("estimate-value", opts, result))?;
    out.csv("h.csv", &["lambda", "re", "im"], spectrum_rows(&grid, |k| vec![res.h[k].re, res.h[k].im]))
}

fn problem_of(opts: &Opts) -> Result<Problem> {
    Ok(Problem::new(load_weight(opts)?, spec(opts)?, opts.grid()?, opts.variant()?)?)
}

fn saddle(
    opts: &Opts,
    problem: &Problem,
    res: &MinimaxResult,
    class: &DensityClass,
    out: &mut Artifacts,
    name: &str,
    cmd: &str,
) -> Result<()> {
    let report = verify_saddle_with(problem, res, class, opts.samples.unwrap_or(50), opts.seed.unwrap_or(0), execution(opts))?;
    out.json(name, &envelope(cmd, opts, &report))?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("saddle-point check failed; see {name}")))
    }
}

fn cmd_minimax(opts: &Opts, out: &mut Artifacts) -> Result<()> {
    let problem = problem_of(opts)?;
    let class = load_class(opts)?;
    let res = least_favorable(&problem, &class, SolverOptions::default())?;
    out.json("minimax.json", &envelope("minimax", opts, &res))?;
    out.csv("f0.csv", &["lambda", "f0"], spectrum_rows(&problem.grid, |k| vec![res.f0_grid[k]]))?;
    saddle(opts, &problem, &res, &class, out, "saddle.json", "minimax")
}

fn cmd_simulate(opts: &Opts, out: &mut Artifacts) -> Result<()> {
    let (_, factor) = factor_of(opts)?;
    let inc = apply_w_tau(&factor, spec(opts)?)?;
    let cfg = sim_config(opts);
    let report = moment_check(&inc, &cfg)?;
    out.json("simulate.json", &envelope("simulate", opts, json!({"report": report, "pass": mc_pass(&report)})))?;
    if opts.dump_paths {
        let paths = simulate_increments(&inc, &cfg)?;
        let rows = paths.iter().enumerate().flat_map(|(r, p)| signal_rows(p).map(move |row| vec![r.to_string(), num(row[0]), num(row[1])]));
        out.csv_fields("paths.csv", &["rep", "t", "value"], rows)?;
    }
    Ok(())
}

fn cmd_verify(opts: &Opts, out: &mut Artifacts) -> Result<()> {
    let kind = opts.kind.as_deref().ok_or_else(|| CliError::Validation("--kind is required".into()))?;
    if kind == "saddle" {
        let problem = problem_of(opts)?;
        let class = load_class(opts)?;
        let env: Value = read_json(opts.require(&opts.result, "result")?)?;
        let res: MinimaxResult = serde_json::from_value(env["result"].clone())
            .map_err(|e| CliError::Validation(format!("--result does not hold a minimax result: {e}")))?;
        return saddle(opts, &problem, &res, &class, out, "verify.json", "verify");
    }
    let f = load_density(opts)?;
    let (grid, spec, cfg) = (opts.grid()?, spec(opts)?, sim_config(opts));
    let report = if kind == "value" {
        let u = opts.u.ok_or_else(|| CliError::Validation("--u is required".into()))?;
        mc_verify_value(u, &f, spec, &grid, &cfg)?
    } else {
        mc_verify_functional(&load_weight(opts)?, &f, spec, &grid, &cfg, opts.variant()?)?
    };
    let pass = mc_pass(&report);
    out.json("verify.json", &envelope("verify", opts, json!({"kind": kind, "report": report, "pass": pass})))?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Numerical("empirical error disagrees with theory; see verify.json".into()))
    }
}

fn run(cli: Cli) -> Result<Vec<String>> {
    let (name, opts) = match cli.command {
        Command::Validate(o) => ("validate", o),
        Command::Factorize(o) => ("factorize", o),
        Command::Estimate(o) => ("estimate", o),
        Command::EstimateValue(o) => ("estimate-value", o),
        Command::Minimax(o) => ("minimax", o),
        Command::Simulate(o) => ("simulate", o),
        Command::Verify(o) => ("verify", o),
    };
    let opts = opts.resolve()?;
    #[cfg(feature = "parallel")]
    if let Some(threads) = opts.threads.filter(|&t| t > 1) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let dir = opts.out_dir();
    let mut out = Artifacts::new(&dir)?;
    let outcome = match name {
        "validate" => validate(&opts, &mut out),
        "factorize" => cmd_factorize(&opts, &mut out),
        "estimate" => cmd_estimate(&opts, &mut out),
        "estimate-value" => cmd_estimate_value(&opts, &mut out),
        "minimax" => cmd_minimax(&opts, &mut out),
        "simulate" => cmd_simulate(&opts, &mut out),
        _ => cmd_verify(&opts, &mut out),
    };
    if outcome.is_ok() || !out.written.is_empty() {
        eprintln!("{}", json!({"level": "info", "command": name, "artifacts": out.written}));
    }
    outcome.map(|_| out.written)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            eprintln!("{}", json!({"level": "error", "kind": "usage", "message": message.trim(), "exitCode": 2}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
