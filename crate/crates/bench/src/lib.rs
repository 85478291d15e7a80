//! Benchmarks for spikesgd-core; see `benches/kernels.rs`.
