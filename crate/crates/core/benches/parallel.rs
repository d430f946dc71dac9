//! Sequential against parallel execution of the data-parallel loops.
//! Build without default features to see the sequential fallback alone.

use catenc::encoders::Method;
use catenc::eval::{knn_regress, run_benchmark, BenchConfig, DataSource, MethodEntry};
use catenc::oracle::{oracle_sweep, SweepConfig};
use catenc::par::Execution;
use catenc::sim::{simulate, Setup, SimConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn knn(c: &mut Criterion) {
    let d = simulate(&SimConfig::new(Setup::LatentLinear, 4000, 4, 40, 10).with_seed(1))
        .unwrap()
        .dataset;
    let train = d.split_rows(&(0..3000).collect::<Vec<_>>()).unwrap();
    let test = d.split_rows(&(3000..4000).collect::<Vec<_>>()).unwrap();
    let mut group = c.benchmark_group("knn_regress");
    for mode in MODES {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| {
                b.iter(|| knn_regress(train.x(), train.y().unwrap(), test.x(), 55, mode).unwrap())
            },
        );
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let cfg = SweepConfig {
        worlds: 16,
        num_latent: 3,
        num_groups: 12,
        p: 4,
        support: 8,
        seed: 2,
    };
    let mut group = c.benchmark_group("oracle_sweep");
    for mode in MODES {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| b.iter(|| oracle_sweep(black_box(&cfg), mode).unwrap()),
        );
    }
    group.finish();
}

fn bench_driver(c: &mut Criterion) {
    let sim = SimConfig::new(Setup::LatentLinear, 1500, 4, 40, 6);
    let mut cfg = BenchConfig::new(
        DataSource::Simulate(sim),
        vec![
            MethodEntry::new(Method::Means),
            MethodEntry::new(Method::Lowrank),
        ],
    );
    cfg.seeds = 2;
    let mut group = c.benchmark_group("run_benchmark");
    group.sample_size(10);
    for mode in MODES {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| b.iter(|| run_benchmark(black_box(&cfg), mode).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, knn, oracle, bench_driver);
criterion_main!(benches);
