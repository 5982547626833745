use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use fusim_core::coded::{EvalPoints, LagrangeCode, ShardBlock};
use fusim_core::fed::{train_stage, HistoryStore, Stage};
use fusim_core::model::{make_synthetic_dataset, partition, FixedPointCodec, Mlp, MlpConfig, PartitionSpec, SgdConfig};
use fusim_core::sim::{monte_carlo, MonteCarloSpec};
use fusim_core::Exec;

const MODES: [Exec; 2] = [Exec::Sequential, Exec::Parallel];

fn blocks(s: usize, len: usize) -> Vec<ShardBlock> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..s)
        .map(|i| ShardBlock {
            shard_id: i as u32,
            round: 1,
            values: (0..len).map(|_| rng.random_range(0..(1u64 << 31) - 1)).collect(),
        })
        .collect()
}

fn coding(c: &mut Criterion) {
    let data = blocks(4, 5 * 874);
    let mut g = c.benchmark_group("coding");
    for exec in MODES {
        let code =
            LagrangeCode::for_codec(EvalPoints::standard(4, 20), &FixedPointCodec::default()).unwrap().with_exec(exec);
        let slices = code.encode(&data).unwrap();
        g.bench_with_input(BenchmarkId::new("encode", format!("{exec:?}")), &code, |b, code| {
            b.iter(|| code.encode(black_box(&data)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("robust_decode", format!("{exec:?}")), &code, |b, code| {
            b.iter(|| code.reconstruct_robust(black_box(&slices)).unwrap())
        });
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let spec = MonteCarloSpec { shards: 4, requests: 8, pass_cost: 1.0, trials: 100_000, jitter: 0.0, seed: 1 };
    let mut g = c.benchmark_group("monte_carlo");
    for exec in MODES {
        g.bench_function(format!("{exec:?}"), |b| b.iter(|| monte_carlo(black_box(&spec), exec).unwrap()));
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let data = make_synthetic_dataset(10, 100, 16, 0.5, 0).unwrap();
    let parts = partition(&data, &PartitionSpec::iid(20, 0)).unwrap();
    let model = Mlp::new(&MlpConfig { input_dim: 16, hidden: vec![32], num_classes: 10 }).unwrap();
    let base = Stage::from_clients(0, parts, 4, 2, 2, model, SgdConfig::default(), 0).unwrap();
    let mut g = c.benchmark_group("train_stage");
    g.sample_size(10);
    for exec in MODES {
        let stage = base.clone().with_exec(exec);
        g.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| {
                let mut h = HistoryStore::uncoded(&stage);
                train_stage(&stage, &mut h).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, coding, simulation, training);
criterion_main!(benches);
