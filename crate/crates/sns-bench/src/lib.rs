//! Benchmark-only crate; see `benches/solver.rs`. Kept as a separate
//! workspace member so criterion and its dependency tree stay out of the
//! library and CLI builds.
