use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use increx::extrapolate::{Variant, WeightFunction};
use increx::minimax::{least_favorable_d0, verify_saddle_with, DensityClass, Problem};
use increx::montecarlo::{mc_verify_value, SimulationConfig};
use increx::par::Execution;
use increx::{FrequencyGrid, IncrementSpec, SampledSignal, SpectralDensity};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let grid = FrequencyGrid::new(4096, 0.05).unwrap();
    let f = SpectralDensity::rational(vec![1.0], vec![1.0, 2.0, 1.0]).unwrap();
    let spec = IncrementSpec::new(2, 1.0).unwrap();
    let mut group = c.benchmark_group("mc_verify_value");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SimulationConfig::new(400, 2000, 400, 1).with_execution(exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(mc_verify_value(0.5, &f, spec, &grid, cfg).unwrap()))
        });
    }
    group.finish();
}

fn saddle(c: &mut Criterion) {
    let grid = FrequencyGrid::new(1024, 0.05).unwrap();
    let a = WeightFunction::finite(SampledSignal::from_fn(0.0, 0.05, 41, |_| 1.0).unwrap()).unwrap();
    let problem = Problem::new(a, IncrementSpec::new(1, 1.0).unwrap(), grid, Variant::FiniteT).unwrap();
    let class = DensityClass::D0 { p0: 1.0 };
    let result = least_favorable_d0(&problem, 1.0).unwrap();
    let mut group = c.benchmark_group("verify_saddle");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(verify_saddle_with(&problem, &result, &class, 50, 1, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, saddle);
criterion_main!(benches);
