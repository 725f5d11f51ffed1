//! On-disk formats, reports, figures and the `layerprobe` command line,
//! built on the `no_std` core in `layerprobe-core`.

pub mod cli;
pub mod curves;
pub mod error;
pub mod fixture;
pub mod pack;
pub mod parallel;
pub mod probe_io;
pub mod report;

pub use error::{CliError, CliResult};
pub use layerprobe_core as core;
