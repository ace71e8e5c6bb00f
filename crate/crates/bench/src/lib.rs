//! Benchmarks for the bofip crates live under `benches/`.
