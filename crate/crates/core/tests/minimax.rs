mod common;

use common::*;
use increx::extrapolate::Variant;
use increx::minimax::*;
use increx::{Error, IncrementSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(n: u32, tau: f64) -> IncrementSpec {
    IncrementSpec::new(n, tau).unwrap()
}

fn d0_problem(variant: Variant) -> Problem {
    Problem::new(weight(41, |_| 1.0), spec(1, 1.0), small_grid(), variant).unwrap()
}

fn band_class() -> DensityClass {
    DensityClass::Band { v: ou().scaled(0.5), u: ou().scaled(2.0), p0: 0.5 }
}

fn eps_class() -> DensityClass {
    DensityClass::Eps { v: ou(), delta: 0.1 }
}

#[test]
fn zero_weight_gives_zero_operator() {
    let m = build_operator_matrix(&weight(21, |_| 0.0), spec(2, 0.5), &small_grid(), Variant::FiniteT).unwrap();
    assert!(m.iter().all(|&v| v == 0.0));
}

#[test]
fn operator_matrix_matches_the_frequency_route() {
    let a = weight(31, |t| 1.0 + (2.0 * t).sin());
    for (n, variant) in [(1, Variant::FiniteT), (2, Variant::FiniteT), (2, Variant::HatT)] {
        let problem = Problem::new(a.clone(), spec(n, 0.5), small_grid(), variant).unwrap();
        let m = build_operator_matrix(&a, spec(n, 0.5), &small_grid(), variant).unwrap();
        assert_eq!(m.nrows(), problem.dim());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let phi: Vec<f64> = (0..problem.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let via_matrix = &m * nalgebra::DVector::from_column_slice(&phi);
            let via_fft = problem.apply(&phi).unwrap();
            let scale = via_matrix.norm();
            for (x, y) in via_matrix.iter().zip(&via_fft) {
                assert!((x - y).abs() <= 1e-8 * scale);
            }
        }
    }
}

#[test]
fn reflected_operator_preserves_norms() {
    let a = weight(31, |t| (-t).exp());
    let s = spec(2, 0.5);
    let fin = build_operator_matrix(&a, s, &small_grid(), Variant::FiniteT).unwrap();
    let hat = build_operator_matrix(&a, s, &small_grid(), Variant::HatT).unwrap();
    assert!((&fin - fin.transpose()).amax() <= 1e-12 * fin.amax());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let phi = nalgebra::DVector::from_fn(fin.nrows(), |_, _| rng.random_range(-1.0..1.0));
        assert!(rel_err((&hat * &phi).norm(), (&fin * &phi).norm()) <= 1e-12);
    }
}

#[test]
fn coneig_examples() {
    let id = solve_coneig(&DMatrix::identity(3, 3), 2.0).unwrap();
    assert!((id.alpha - 1.0).abs() < 1e-14);
    assert!(rel_err(id.phi.iter().map(|v| v * v).sum(), 2.0) < 1e-14);

    let d = solve_coneig(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]), 4.0).unwrap();
    assert!((d.alpha - 3.0).abs() < 1e-14);
    assert!((d.phi[0] - 2.0).abs() < 1e-14 && d.phi[1].abs() < 1e-14);

    let upper = solve_coneig(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]), 1.0).unwrap();
    assert!((upper.alpha - 2.0).abs() < 1e-12 && upper.residual < 1e-10);
    assert!((upper.phi[0] - 1.0).abs() < 1e-10);

    let rotation = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    assert!(matches!(solve_coneig(&rotation, 1.0), Err(Error::NoAdmissibleSolution(_))));
    assert!(matches!(solve_coneig(&DMatrix::identity(2, 2), -1.0), Err(Error::InvalidArgument(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn coneig_finds_the_dominant_symmetric_eigenvalue(entries in prop::collection::vec(-1.0f64..1.0, 64), p in 0.1f64..10.0) {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| (0..8).map(|j| entries[8 * i.min(j) + i.max(j)]).collect()).collect();
        let m = DMatrix::from_fn(8, 8, |i, j| rows[i][j]);
        let sol = solve_coneig(&m, p).unwrap();
        let dominant = jacobi_eigenvalues(&rows).into_iter().fold(0.0f64, |a, l| if l.abs() > a.abs() { l } else { a });
        prop_assert!((sol.alpha.abs() - dominant.abs()).abs() <= 1e-10);
        prop_assert!(sol.residual <= 1e-10);
        prop_assert!(rel_err(sol.phi.iter().map(|v| v * v).sum(), p) <= 1e-12);
    }
}

#[test]
fn d0_solution_exhausts_the_power_budget() {
    let problem = d0_problem(Variant::FiniteT);
    let res = least_favorable_d0(&problem, 1.0).unwrap();
    let g = small_grid();
    assert!(rel_err(g.integrate(&res.f0_grid), 1.0) <= 1e-10);
    assert!(res.f0_grid.iter().all(|&v| v >= 0.0));
    assert!(res.diagnostics.fixedpoint_residual <= 1e-8);
    assert_eq!(res.diagnostics.branch, "eigen");
    assert!(rel_err(res.delta0, res.diagnostics.nu0) <= 1e-6);
    assert!(rel_err(res.delta0, res.alpha.re * res.alpha.re) <= 1e-6);
}

#[test]
fn d0_solution_is_homogeneous_in_the_power() {
    let problem = d0_problem(Variant::FiniteT);
    let one = least_favorable_d0(&problem, 1.0).unwrap();
    let three = least_favorable_d0(&problem, 3.0).unwrap();
    assert!(rel_err(three.delta0, 3.0 * one.delta0) <= 1e-8);
    let peak = one.f0_grid.iter().fold(0.0f64, |a, &v| a.max(v));
    for (x, y) in one.f0_grid.iter().zip(&three.f0_grid) {
        assert!((3.0 * x - y).abs() <= 1e-8 * 3.0 * peak);
    }
}

#[test]
fn d0_value_does_not_depend_on_the_reflection() {
    let fin = least_favorable_d0(&d0_problem(Variant::FiniteT), 1.0).unwrap();
    let hat = least_favorable_d0(&d0_problem(Variant::HatT), 1.0).unwrap();
    assert!(rel_err(hat.delta0, fin.delta0) <= 1e-8);
}

#[test]
fn d0_beats_sampled_densities() {
    let problem = d0_problem(Variant::FiniteT);
    let res = least_favorable_d0(&problem, 1.0).unwrap();
    let class = DensityClass::D0 { p0: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let f = sample_density(&class, &problem.grid, &mut rng);
        assert!(problem.grid.integrate(&f) <= 1.0 + 1e-12);
        assert!(problem.mse_of_density(&f).unwrap() <= res.delta0 * (1.0 + 1e-9));
    }
}

#[test]
fn degenerate_band_returns_its_edge() {
    let g = small_grid();
    let problem = Problem::new(weight(21, |_| 1.0), spec(1, 1.0), g, Variant::FiniteT).unwrap();
    let p0 = g.integrate(&ou().on_grid(&g));
    let res = least_favorable_band(&problem, &ou(), &ou(), p0).unwrap();
    for (x, y) in res.f0_grid.iter().zip(ou().on_grid(&g)) {
        assert!((x - y).abs() <= 1e-12 * y.max(1e-300) + 1e-300);
    }
    assert!(matches!(least_favorable_band(&problem, &ou(), &ou(), 2.0 * p0), Err(Error::InvalidArgument(_))));
}

#[test]
fn band_solution_is_feasible() {
    let g = small_grid();
    let problem = Problem::new(weight(41, |_| 1.0), spec(1, 1.0), g, Variant::FiniteT).unwrap();
    let DensityClass::Band { v, u, p0 } = band_class() else { unreachable!() };
    let res = least_favorable_band(&problem, &v, &u, p0).unwrap();
    let (vg, ug) = (v.on_grid(&g), u.on_grid(&g));
    for k in 0..g.size {
        assert!(res.f0_grid[k] >= vg[k] * (1.0 - 1e-12) && res.f0_grid[k] <= ug[k] * (1.0 + 1e-12));
    }
    assert!(rel_err(g.integrate(&res.f0_grid), p0) <= 1e-8);
    assert!(res.diagnostics.fixedpoint_residual <= 1e-6);
}

#[test]
fn eps_solution_spends_the_budget() {
    let g = small_grid();
    let problem = Problem::new(weight(41, |_| 1.0), spec(1, 1.0), g, Variant::FiniteT).unwrap();
    let vg = ou().on_grid(&g);
    let l1 = |f: &[f64]| g.integrate(&f.iter().zip(&vg).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>());
    let res = least_favorable_eps(&problem, &ou(), 0.1).unwrap();
    assert!(rel_err(l1(&res.f0_grid), 0.1) <= 1e-6);
    assert!(res.f0_grid.iter().zip(&vg).all(|(a, b)| a >= b));
    let tiny = least_favorable_eps(&problem, &ou(), 1e-9).unwrap();
    assert!(l1(&tiny.f0_grid) <= 1e-6 * g.integrate(&vg));
}

#[test]
fn saddle_point_holds_for_every_class() {
    let g = small_grid();
    for class in [DensityClass::D0 { p0: 1.0 }, band_class(), eps_class()] {
        let problem = Problem::new(weight(41, |_| 1.0), spec(1, 1.0), g, Variant::FiniteT).unwrap();
        let res = least_favorable(&problem, &class, SolverOptions::default()).unwrap();
        let report = verify_saddle(&problem, &res, &class, 40, 7).unwrap();
        assert!(report.pass, "{}: {report:?}", class.name());
        assert!(rel_err(report.delta0, res.delta0) <= 1e-6);
    }
}

#[test]
fn class_files_roundtrip() {
    let json = r#"{"class":"band","v":{"rational":{"num":[0.5],"den":[1.0,1.0]}},"u":{"rational":{"num":[2.0],"den":[1.0,1.0]}},"P0":0.5}"#;
    let class: DensityClass = serde_json::from_str(json).unwrap();
    assert_eq!(class.name(), "band");
    let back: DensityClass = serde_json::from_str(&serde_json::to_string(&class).unwrap()).unwrap();
    assert_eq!(back, class);
    let d0: DensityClass = serde_json::from_str(r#"{"class":"D0","P0":2.0}"#).unwrap();
    assert_eq!(d0, DensityClass::D0 { p0: 2.0 });
    assert!(serde_json::from_str::<DensityClass>(r#"{"class":"other"}"#).is_err());
}
