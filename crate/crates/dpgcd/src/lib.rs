//! File formats, the benchmark harness and the `dpgcd` command-line tool
//! on top of [`dpgcd_core`].

pub mod bench;
pub mod cli;
pub mod config;
pub mod io;

pub use dpgcd_core as core;
