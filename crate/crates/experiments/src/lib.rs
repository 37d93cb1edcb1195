//! Experiment drivers for the multigraph learning toolkit.

pub mod cli;
pub mod config;
pub mod report;
pub mod sourceloc;
pub mod wireless;
