//! Benchmark-only crate; see `benches/kernels.rs` for the measured
//! kernels (gossip rounds, gradients, and whole solver iterations).
