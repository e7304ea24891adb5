//! File formats, configuration, parallel execution and reports for
//! `rdmi-core`.

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod report;
pub mod runner;
