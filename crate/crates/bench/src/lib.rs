//! Benchmarks for the pipeline live in `benches/`.
