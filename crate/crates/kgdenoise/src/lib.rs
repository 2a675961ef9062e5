//! File formats, reports and the command-line interface around
//! `kgdenoise-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod jobs;
pub mod report;
pub mod tsv;
