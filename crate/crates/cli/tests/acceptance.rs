//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use increx::extrapolate::{decompose, spectral_characteristic, Variant, WeightFunction};
use increx::increments::{a_l_coeffs, d_coeffs};
use increx::minimax::{least_favorable, verify_saddle, DensityClass, MinimaxResult, Problem, SaddleReport, SolverOptions};
use increx::montecarlo::{mc_verify_functional, mc_verify_value, McReport, SimulationConfig};
use increx::spectral::{apply_w_tau, factorize, factorize_refined, omega_tau};
use increx::{FrequencyGrid, IncrementSpec, SampledSignal, SpectralDensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.05;
const SEED: u64 = 2026;

type Outcome = Result<String, String>;

fn grid() -> FrequencyGrid {
    FrequencyGrid::new(4096, DT).unwrap()
}

fn rational(num: &[f64], den: &[f64]) -> SpectralDensity {
    SpectralDensity::rational(num.to_vec(), den.to_vec()).unwrap()
}

fn ou() -> SpectralDensity {
    rational(&[1.0], &[1.0, 1.0])
}

fn ou2() -> SpectralDensity {
    rational(&[1.0], &[1.0, 2.0, 1.0])
}

fn spec(n: u32, tau: f64) -> IncrementSpec {
    IncrementSpec::new(n, tau).unwrap()
}

fn indicator_weight() -> WeightFunction {
    WeightFunction::finite(SampledSignal::from_fn(0.0, DT, 41, |_| 1.0).unwrap()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lib<T>(r: increx::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn poly_pow(base: &[u128], n: u32) -> Vec<u128> {
    (0..n).fold(vec![1u128], |acc, _| {
        let mut out = vec![0u128; acc.len() + base.len() - 1];
        for (i, x) in acc.iter().enumerate() {
            for (j, y) in base.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    })
}

fn combinatorics() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for n in 1..=6u32 {
        for k in 0..=64usize {
            let want = poly_pow(&vec![1; k + 1], n)[..=k].to_vec();
            if lib(d_coeffs(n, k))? != want {
                return Err(format!("d_coeffs(n={n}, K={k}) differs from the series expansion"));
            }
            checked += 1;
        }
        for k in 1..=6usize {
            if lib(a_l_coeffs(n, k))? != poly_pow(&vec![1; k], n) {
                return Err(format!("a_l_coeffs(n={n}, k={k}) differs from the polynomial power"));
            }
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 1.0, format!("{checked} coefficient rows equal, {secs:.3} s"))
}

fn decomposition() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = 1 + (i % 3) as u32;
        let steps = if (i / 3) % 2 == 0 { 1 } else { 4 };
        let tau = steps as f64 * DT;
        let len = rng.random_range(10..80);
        let ac: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = lib(WeightFunction::finite(lib(SampledSignal::from_fn(0.0, DT, len, |t| {
            1.0 + ac[0] * t + ac[1] * (2.0 * t).sin() + ac[2] * (-t).exp()
        }))?))?;
        let modes: Vec<(f64, f64, f64)> =
            (0..5).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.1..3.0), rng.random_range(0.0..6.3))).collect();
        let slope = rng.random_range(-1.0..1.0);
        let t0 = -(n as f64) * tau - 1.0;
        let path = lib(SampledSignal::from_fn(t0, DT, len + 20 + n as usize * steps + 20, |t| {
            slope * t + modes.iter().map(|(c, w, p)| c * (w * t + p).sin()).sum::<f64>()
        }))?;
        let d = lib(decompose(&a, &path, spec(n, tau)))?;
        worst = worst.max(d.residual() / d.a_xi.abs().max(f64::MIN_POSITIVE));
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-6 && secs < 10.0, format!("max relative residual {worst:.2e} over 100 paths, {secs:.2} s"))
}

fn rational_family() -> Vec<(&'static str, SpectralDensity)> {
    vec![
        ("1/(1+λ²)", ou()),
        ("1/(1+λ²)²", ou2()),
        ("(1+λ²/4)/((1+λ²)(1+λ²/9))", rational(&[1.0, 0.25], &[1.0, 1.0 + 1.0 / 9.0, 1.0 / 9.0])),
        ("1/((1+λ²)(4+λ²))", rational(&[1.0], &[4.0, 5.0, 1.0])),
        ("1/(1+λ²)⁴", rational(&[1.0], &[1.0, 4.0, 6.0, 4.0, 1.0])),
        ("(2+λ²)/((1+λ²)²(3+λ²))", rational(&[2.0, 1.0], &[3.0, 7.0, 5.0, 1.0])),
    ]
}

fn roundtrip(solutions: &[(&'static str, Result<MinimaxResult, String>)]) -> Outcome {
    let mut densities = rational_family();
    for (name, res) in solutions {
        match res {
            Ok(r) => densities.push((name, r.f0.clone())),
            Err(e) => return Err(format!("f⁰ of {name} unavailable: {e}")),
        }
    }
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, f) in &densities {
        let start = Instant::now();
        let fac = factorize_refined(f, &grid(), 1e-16, 1 << 20).or_else(|_| factorize(f, &grid()));
        let fac = lib(fac)?;
        let secs = start.elapsed().as_secs_f64();
        let pass = fac.roundtrip_error <= 1e-3 && fac.negative_time_energy <= 1e-16 && secs < 5.0;
        ok &= pass;
        lines.push(format!(
            "{name}: N={} rt {:.1e} neg {:.1e} {secs:.2} s{}",
            fac.grid.size,
            fac.roundtrip_error,
            fac.negative_time_energy,
            if pass { "" } else { " FAIL" }
        ));
    }
    check(ok, lines.join("; "))
}

fn increment_transfer() -> Outcome {
    let start = Instant::now();
    let g = grid();
    let mut worst: f64 = 0.0;
    for f in [ou(), ou2()] {
        let fac = lib(factorize(&f, &g))?;
        for n in 1..=2 {
            for tau in [1.0, (2.5f64).round() * DT] {
                let s = spec(n, tau);
                let inc = lib(apply_w_tau(&fac, s))?;
                let omega = omega_tau(s, &g);
                let scale = omega[0].norm_sqr() * fac.f_grid[0];
                for ((o, f), got) in omega.iter().zip(&fac.f_grid).zip(&inc.big_phi_tau) {
                    let want = o.norm_sqr() * f;
                    // relative error is undefined at the zeros of Ω_τ
                    if want > 1e-12 * scale {
                        worst = worst.max((got.norm_sqr() - want).abs() / want);
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-3 && secs < 5.0, format!("max relative error {worst:.2e}, {secs:.2} s"))
}

fn parseval() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = 1 + (i % 2) as u32;
        let variant = if i % 4 < 2 { Variant::FiniteT } else { Variant::HatT };
        let len = rng.random_range(10..120);
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = lib(WeightFunction::finite(lib(SampledSignal::from_fn(0.0, DT, len, |t| {
            c[0] + c[1] * t + c[2] * (3.0 * t).cos() + c[3] * (-t).exp()
        }))?))?;
        let f = if n == 1 { ou() } else { ou2() };
        let res = lib(spectral_characteristic(&a, &f, spec(n, 1.0), &grid(), variant))?;
        worst = worst.max((res.mse - res.mse_spectral).abs() / res.mse);
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-6 && secs < 10.0, format!("max relative gap {worst:.2e} over 20 weights, {secs:.2} s"))
}

fn monte_carlo_runs() -> Result<Vec<(String, McReport)>, String> {
    let cfg = SimulationConfig::new(400, 2000, 2000, SEED);
    let a = indicator_weight();
    let mut runs = Vec::new();
    for (n, f) in [(1, ou()), (2, ou2())] {
        let s = spec(n, 1.0);
        runs.push((format!("value n={n}"), lib(mc_verify_value(0.5, &f, s, &grid(), &cfg))?));
        runs.push((format!("functional n={n}"), lib(mc_verify_functional(&a, &f, s, &grid(), &cfg, Variant::FiniteT))?));
    }
    Ok(runs)
}

fn monte_carlo_mse(runs: &Result<Vec<(String, McReport)>, String>, secs: f64) -> Outcome {
    let runs = runs.clone()?;
    let ok = runs.iter().all(|(_, r)| r.z_score.abs() <= 3.0) && secs < 180.0;
    let detail: Vec<String> = runs
        .iter()
        .map(|(name, r)| format!("{name}: mse {:.4} vs {:.4}, z {:+.2}", r.empirical_mse, r.theoretical_mse, r.z_score))
        .collect();
    check(ok, format!("{}; {secs:.1} s", detail.join("; ")))
}

fn orthogonality(runs: &Result<Vec<(String, McReport)>, String>) -> Outcome {
    let runs = runs.clone()?;
    let ok = runs.iter().all(|(_, r)| r.orthogonality_max_z <= 3.0);
    let detail: Vec<String> = runs.iter().map(|(name, r)| format!("{name}: max |z| {:.2}", r.orthogonality_max_z)).collect();
    check(ok, detail.join("; "))
}

fn classes() -> Vec<(&'static str, DensityClass)> {
    vec![
        ("D0", DensityClass::D0 { p0: 1.0 }),
        ("band", DensityClass::Band { v: ou().scaled(0.5), u: ou().scaled(2.0), p0: 0.5 }),
        ("eps", DensityClass::Eps { v: ou(), delta: 0.1 }),
    ]
}

fn problem() -> Problem {
    Problem::new(indicator_weight(), spec(1, 1.0), grid(), Variant::FiniteT).unwrap()
}

struct Solved {
    name: &'static str,
    class: DensityClass,
    result: Result<MinimaxResult, String>,
    report: Result<SaddleReport, String>,
    secs: f64,
}

fn solve_all() -> Vec<Solved> {
    let p = problem();
    classes()
        .into_iter()
        .map(|(name, class)| {
            let start = Instant::now();
            let result = lib(least_favorable(&p, &class, SolverOptions::default()));
            let report = match &result {
                Ok(r) => lib(verify_saddle(&p, r, &class, 50, SEED)),
                Err(e) => Err(e.clone()),
            };
            Solved { name, class, result, report, secs: start.elapsed().as_secs_f64() }
        })
        .collect()
}

fn maximality(s: &Solved) -> Result<(bool, String), String> {
    let (r, rep) = (s.result.clone()?, s.report.clone()?);
    let ok = rep.maximality_slack >= -1e-6 * r.delta0 && rep.skipped == 0;
    Ok((ok, format!("delta0 {:.6}, maximality slack {:.3e} over {} samples", r.delta0, rep.maximality_slack, rep.samples)))
}

fn d0_solver(s: &Solved) -> Outcome {
    let r = s.result.clone()?;
    let d = &r.diagnostics;
    let (max_ok, max_detail) = maximality(s)?;
    let ok = d.eigen_residual <= 1e-8 && d.power_error <= 1e-6 && max_ok && s.secs < 60.0;
    check(
        ok,
        format!(
            "eigen residual {:.1e}, power error {:.1e}, branch {}, {max_detail}, {:.1} s",
            d.eigen_residual, d.power_error, d.branch, s.secs
        ),
    )
}

fn band_solver(s: &Solved) -> Outcome {
    let r = s.result.clone()?;
    let DensityClass::Band { v, u, p0 } = &s.class else { return Err("not a band class".into()) };
    let g = grid();
    let (vg, ug) = (v.on_grid(&g), u.on_grid(&g));
    let inside = (0..g.size).all(|k| vg[k] <= r.f0_grid[k] && r.f0_grid[k] <= ug[k]);
    let total = g.integrate(&r.f0_grid) * 2.0 * std::f64::consts::PI;
    let target = 2.0 * std::f64::consts::PI * p0;
    let power_ok = (total - target).abs() <= 1e-6 * target;
    let (max_ok, max_detail) = maximality(s)?;
    let ok = inside && power_ok && r.diagnostics.fixedpoint_residual <= 1e-6 && max_ok;
    check(
        ok,
        format!(
            "inside band {inside}, power {total:.9} vs {target:.9}, fixed-point residual {:.1e}, {max_detail}",
            r.diagnostics.fixedpoint_residual
        ),
    )
}

fn eps_solver(s: &Solved) -> Outcome {
    let r = s.result.clone()?;
    let DensityClass::Eps { v, delta } = &s.class else { return Err("not an eps class".into()) };
    let g = grid();
    let vg = v.on_grid(&g);
    let l1 = |f: &[f64]| g.integrate(&f.iter().zip(&vg).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>());
    let budget = l1(&r.f0_grid);
    let tiny = lib(least_favorable(&problem(), &DensityClass::Eps { v: v.clone(), delta: 1e-9 }, SolverOptions::default()))?;
    let degenerate = l1(&tiny.f0_grid);
    let (max_ok, max_detail) = maximality(s)?;
    let ok = budget <= delta * (1.0 + 1e-6) && degenerate <= 1e-6 && max_ok;
    check(ok, format!("L¹ budget {budget:.9} of {delta}, δ=1e-9 gives L¹ {degenerate:.1e}, {max_detail}"))
}

fn saddle(solved: &[Solved]) -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    let mut secs = 0.0;
    for s in solved {
        let rep = s.report.clone()?;
        let tol = -1e-6 * rep.delta0;
        let pass = rep.right_slack >= tol && rep.left_slack >= tol && rep.samples == 50;
        ok &= pass;
        secs += s.secs;
        lines.push(format!("{}: right {:.2e}, left {:.2e}", s.name, rep.right_slack, rep.left_slack));
    }
    check(ok && secs < 120.0, format!("{}; {secs:.1} s", lines.join("; ")))
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name).display().to_string()
}

fn cli_run(dir: &Path, threads: Option<&str>) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let _ = std::fs::remove_dir_all(dir);
    let out = dir.display().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec!["factorize".into(), "--density".into(), data("ou2.json"), "--n".into(), "2".into()],
        vec!["estimate".into(), "--density".into(), data("ou2.json"), "--weight".into(), data("weight.json"), "--n".into(), "2".into()],
        vec!["minimax".into(), "--class".into(), data("eps.json"), "--weight".into(), data("weight.json"), "--samples".into(), "20".into()],
        vec![
            "verify".into(),
            "--kind".into(),
            "value".into(),
            "--density".into(),
            data("ou.json"),
            "--u".into(),
            "0.5".into(),
            "--reps".into(),
            "200".into(),
        ],
    ];
    for args in runs {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_increx"));
        cmd.args(&args).args(["--seed", "7", "--out", &out]).env_remove("INCREX_THREADS");
        if let Some(t) = threads {
            cmd.args(["--threads", t]);
        }
        let status = cmd.output().map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("{} exited with {}: {}", args[0], status.status, String::from_utf8_lossy(&status.stderr).trim()));
        }
    }
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn cli_determinism() -> Outcome {
    let base: PathBuf = std::env::temp_dir().join(format!("increx-acceptance-{}", std::process::id()));
    let first = cli_run(&base.join("a"), None)?;
    let second = cli_run(&base.join("b"), None)?;
    let single = cli_run(&base.join("c"), Some("1"))?;
    let _ = std::fs::remove_dir_all(&base);
    let bytes: usize = first.values().map(Vec::len).sum();
    check(
        first == second && first == single && !first.is_empty(),
        format!("{} artifacts ({bytes} bytes) identical across 3 runs (one single-threaded)", first.len()),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |id: u32, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("criterion {id:>2}: PASS  {d}"),
            Err(d) => println!("criterion {id:>2}: FAIL  {d}"),
        }
        results.push((id, outcome));
    };
    report(1, combinatorics());
    report(2, decomposition());
    let solved = solve_all();
    let f0s: Vec<(&'static str, Result<MinimaxResult, String>)> = solved.iter().map(|s| (s.name, s.result.clone())).collect();
    report(3, roundtrip(&f0s));
    report(4, increment_transfer());
    report(5, parseval());
    let mc_start = Instant::now();
    let runs = monte_carlo_runs();
    report(6, monte_carlo_mse(&runs, mc_start.elapsed().as_secs_f64()));
    report(7, orthogonality(&runs));
    report(8, d0_solver(&solved[0]));
    report(9, band_solver(&solved[1]));
    report(10, eps_solver(&solved[2]));
    report(11, saddle(&solved));
    report(12, cli_determinism());
    let failed: Vec<u32> = results.iter().filter(|r| r.1.is_err()).map(|r| r.0).collect();
    println!("acceptance: {}/{} passed in {:.1} s", results.len() - failed.len(), results.len(), start.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
