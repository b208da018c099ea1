//! Criterion benchmarks for sketchspar live in `benches/`.
