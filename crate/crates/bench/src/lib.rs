//! Benchmark-only package; the measurements live in `benches/pipeline.rs`.
//! Run them with `cargo bench -p gradbal-bench`.
