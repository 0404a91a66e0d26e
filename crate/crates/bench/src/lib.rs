//! Criterion benchmarks for the unlearning engines; see `benches/`.
