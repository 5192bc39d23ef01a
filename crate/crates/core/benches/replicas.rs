use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use metastate_core::exec::Execution;
use metastate_core::markov::{self, presets, CovarianceMethod};
use metastate_core::meanfield::PottsParams;
use metastate_core::metastate::{self, MarginSchedule};
use metastate_core::potts;
use metastate_core::simplex::TangentVector;

fn stability() -> Vec<TangentVector> {
    let params = PottsParams::new(4.0, 1.69, 3).unwrap();
    let u = potts::ordered_branch(&params, 1e-9).unwrap().u;
    (0..3).map(|j| potts::stability_vector_closed(&params, u, j)).collect()
}

fn backends(c: &mut Criterion) {
    let m = presets::doubly(0.4, 0.3, 0.2, 0.5).unwrap();
    let pi = markov::stationary(&m).unwrap();
    let sigma = markov::covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, 1e-13).unwrap();
    let b = stability();
    let mut group = c.benchmark_group("replicas");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new("gaussian_weights", name), &exec, |bench, &exec| {
            bench.iter(|| metastate::gaussian_weights(&sigma, &b, 200_000, 0.0, 1, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("empirical_weights", name), &exec, |bench, &exec| {
            bench.iter(|| {
                metastate::empirical_region_weights(&m, &pi, &b, 2000, 2000, MarginSchedule::scaled(&b), 2, exec)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, backends);
criterion_main!(benches);
