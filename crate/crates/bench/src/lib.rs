//! Criterion benchmarks for `storm-core`; see `benches/storm.rs`.
