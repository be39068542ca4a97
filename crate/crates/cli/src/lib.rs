//! Experiment harness around the `banach-fbs` solvers: configuration,
//! synthetic data, solver orchestration and plot-table output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod diagnose;
pub mod error;
pub mod sparse;
pub mod table;
pub mod tv_cmd;

pub use error::{CliError, CliResult};
