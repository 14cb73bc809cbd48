//! Sequential versus data-parallel execution of the parallel stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use prforge::{
    initialization_stage, run_prnet, run_with_tta, simulate_seeded, DenoiserModel, Execution, FourierOp, Image,
    PipelineConfig, TtaMode,
};

fn fixture() -> (FourierOp, prforge::Measurement) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/natural/camera.png");
    let x = Image::read_png(path).unwrap();
    let op = FourierOp::new(x.height(), x.width()).unwrap();
    let meas = simulate_seeded(&op, &x, 3.0, 1).unwrap();
    (op, meas)
}

fn config(exec: Execution) -> PipelineConfig {
    let mut cfg = PipelineConfig::large(3.0, 0);
    cfg.init.num_starts = 16;
    cfg.init.long_iters = 200;
    cfg.chains = 8;
    cfg.execution = exec;
    cfg.init.execution = exec;
    cfg
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_init(c: &mut Criterion) {
    let (op, meas) = fixture();
    let mut group = c.benchmark_group("initialization");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = config(exec).init_config();
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(initialization_stage(&op, &meas, cfg).unwrap()))
        });
    }
    group.finish();
}

fn bench_chains(c: &mut Criterion) {
    let (op, meas) = fixture();
    let model = DenoiserModel::gaussian();
    let mut group = c.benchmark_group("prnet_large");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = config(exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(run_prnet(&op, &meas, cfg, &model, None).unwrap()))
        });
    }
    group.finish();
}

fn bench_tta(c: &mut Criterion) {
    let (op, meas) = fixture();
    let model = DenoiserModel::gaussian();
    let mut group = c.benchmark_group("tta_d4");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = config(exec);
        cfg.chains = 1;
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(run_with_tta(&op, &meas, cfg, &model, TtaMode::D4, None).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_init, bench_chains, bench_tta);
criterion_main!(benches);
