//! Dataset ingestion, experiment orchestration and the command line.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod runner;
