//! Criterion benchmarks for the flow engine; see `benches/`.
