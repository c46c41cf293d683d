use criterion::{criterion_group, criterion_main};

criterion_group!(benches, vnfmig_bench::surrogate_benchmarks);
criterion_main!(benches);
