//! Criterion benchmarks for `hmtc-core`; see `benches/`.
