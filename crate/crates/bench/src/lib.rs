//! Criterion benchmarks for `kae-core` live in `benches/`.
