//! Experiment harness, matrix I/O and command-line plumbing around `stls-core`.

pub mod experiment;
pub mod instances;
pub mod io;
