//! Data generation, Monte-Carlo drivers and the `islet` command line.

pub mod cli;
pub mod experiment;
pub mod generate;
pub mod metrics;
