//! Criterion benchmarks for the dissipon kernels live in `benches/`.
