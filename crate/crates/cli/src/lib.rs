//! Command-line front end: binds JSON run configurations to the library's
//! solvers, scans and sweeps, and writes plot-ready data files.

pub mod commands;
pub mod config;
pub mod logging;

pub use commands::{execute, Invocation};
