//! Command-line harness for the obstacle-avoidance experiments: predictor
//! training and evaluation, seeded multi-run agent training, agent
//! evaluation, and SVG figures drawn from the CSV files those commands write.

pub mod commands;
pub mod plot;

pub use commands::{run, Cli, Command};
