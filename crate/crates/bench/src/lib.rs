//! Criterion benchmarks for `linerank`; see `benches/`.
