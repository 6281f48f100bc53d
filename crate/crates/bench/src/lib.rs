//! Criterion benchmarks for the hot paths of `trialagent-core`; see `benches/core_ops.rs`.
