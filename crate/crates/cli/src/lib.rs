//! Command-line front end: configuration, scenario registry and pipeline.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod scenario;
