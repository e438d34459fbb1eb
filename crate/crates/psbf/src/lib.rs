//! Std companion to `psbf-core`: the process-spec file format, a rayon
//! worker pool and wall clock, the side-by-side filter runner, the benchmark
//! harness and report rendering used by the `psbf` binary.

pub mod bench;
pub mod pool;
pub mod report;
pub mod runner;
pub mod specfile;
