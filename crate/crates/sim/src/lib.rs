//! File formats and command-line driver for the `pmsm-smo` simulator.

pub mod cli;
pub mod config;
pub mod output;
