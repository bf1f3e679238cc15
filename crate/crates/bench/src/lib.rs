//! Criterion benchmarks for nvs4d-core live under benches/.
