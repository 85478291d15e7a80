//! Experiment harness around `spikesgd-core`: Figure 1 panels, the `eta1`
//! sweep, transfer budgets, phase portraits and PCA checks, each writing CSV
//! files and a `summary.json`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

pub use config::ExperimentConfig;
pub use experiments::{run_command, Report};
