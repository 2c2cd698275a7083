//! Command line runner for `hyperpred-core`: strict TOML scenario configs,
//! CSV output and SVG plots.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod expr;
pub mod output;
pub mod plot;
pub mod run;
pub mod study;
