//! Benchmark crate; see `benches/walk.rs`.
