//! Command-line front end for the `neurotrack` pipeline: simulate, train, rates, report.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
