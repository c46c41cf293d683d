//! Benchmark fixtures and groups. Run with `cargo bench -p vnfmig-bench`.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use ndarray::Array2;
use vnfmig::dataset::{encode_features, FeatureSchema};
use vnfmig::mlp::{decode_rows, MlpModel, ModelSpec};
use vnfmig::topology::generate_corpus;
use vnfmig::{brute_force_oracle, solve, GeneratorConfig, MigrationProblem, MigrationSet, NetworkSnapshot};

pub const REQUEST_COUNTS: [usize; 3] = [1, 10, 100];

pub fn corpus(n: u64) -> Vec<NetworkSnapshot> {
    generate_corpus(&GeneratorConfig::default(), n).expect("default generator")
}

/// `n` requests cycling through the pool and all 63 migration sets.
pub fn requests(pool: &[NetworkSnapshot], n: usize) -> Vec<(&NetworkSnapshot, MigrationSet)> {
    (0..n).map(|i| (&pool[i % pool.len()], MigrationSet::from_bits((i * 37 % 63) as u32 + 1))).collect()
}

/// Untrained default-width surrogate over raw (unnormalized) features.
pub fn surrogate(pool: &[NetworkSnapshot]) -> (MlpModel, FeatureSchema) {
    let schema = FeatureSchema::for_snapshot(&pool[0]);
    let spec = ModelSpec::new(schema.width(), schema.n_instances, schema.n_servers);
    (MlpModel::new(spec, 0).expect("default spec"), schema)
}

pub fn solver_benchmarks(c: &mut Criterion) {
    let pool = corpus(50);
    let mut group = c.benchmark_group("solver");
    for n in REQUEST_COUNTS {
        let batch = requests(&pool, n);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("branch_and_bound", n), &batch, |b, batch| {
            b.iter(|| {
                for &(snapshot, set) in batch {
                    black_box(solve(&MigrationProblem::new(snapshot, set).unwrap()));
                }
            })
        });
    }
    group.finish();

    let batch = requests(&pool, 10);
    c.bench_function("solver/oracle_10", |b| {
        b.iter(|| {
            for &(snapshot, set) in &batch {
                black_box(brute_force_oracle(&MigrationProblem::new(snapshot, set).unwrap()).unwrap());
            }
        })
    });
}

pub fn surrogate_benchmarks(c: &mut Criterion) {
    let pool = corpus(50);
    let (model, schema) = surrogate(&pool);
    let mut group = c.benchmark_group("surrogate");
    for n in REQUEST_COUNTS {
        let batch = requests(&pool, n);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("encode_predict_decode", n), &batch, |b, batch| {
            b.iter(|| {
                let mut x = Array2::zeros((batch.len(), schema.width()));
                for (row, &(snapshot, set)) in batch.iter().enumerate() {
                    let encoded = encode_features(snapshot, set, &schema).unwrap();
                    x.row_mut(row).assign(&ndarray::ArrayView1::from(&encoded));
                }
                let p = model.predict(&x).unwrap();
                black_box(decode_rows(&p, schema.n_instances, schema.n_servers))
            })
        });
    }
    group.finish();
}
