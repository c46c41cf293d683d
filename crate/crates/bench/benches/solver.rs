use criterion::{criterion_group, criterion_main};

criterion_group!(benches, vnfmig_bench::solver_benchmarks);
criterion_main!(benches);
