use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mgpu_memsim::batch::{run_jobs, run_jobs_sequential, Job};
use mgpu_memsim::workload::{Distribution, DnnAlgorithm};
use mgpu_memsim::{Mode, SystemConfig, Workload, WorkloadSpec};

fn workloads(cfg: &SystemConfig) -> Vec<Workload> {
    let mut specs: Vec<WorkloadSpec> = Distribution::ALL
        .into_iter()
        .map(|dist| WorkloadSpec::Sgemm { n: 128, tile: 16, dist })
        .collect();
    specs.extend(DnnAlgorithm::ALL.into_iter().map(|alg| WorkloadSpec::Dnn {
        alg,
        weight_bytes: 64 << 10,
    }));
    specs.iter().map(|s| s.build(cfg, 0).unwrap()).collect()
}

fn batch(c: &mut Criterion) {
    let base = SystemConfig::default();
    let works = workloads(&base);
    let cfgs: Vec<_> = [Mode::Tsm, Mode::Rdma]
        .into_iter()
        .map(|m| base.clone().with_mode(m).validate().unwrap())
        .collect();
    let jobs: Vec<Job> = works
        .iter()
        .flat_map(|w| cfgs.iter().map(move |cfg| Job { cfg, workload: w }))
        .collect();

    let mut g = c.benchmark_group("batch");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| run_jobs_sequential(black_box(&jobs))));
    g.bench_function("parallel", |b| b.iter(|| run_jobs(black_box(&jobs))));
    g.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
