//! Criterion benchmarks for the `skewtherm` kernels live in `benches/`.
