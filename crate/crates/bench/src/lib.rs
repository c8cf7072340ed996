//! Criterion benchmarks for the `ecoinf` estimators; see `benches/`.
