//! Experiment harness for `muse-core`: the `muse` subcommands, the
//! reproduction claims behind the acceptance suite, and the golden
//! regression corpus.

// Range checks are written `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod denoise;
pub mod error;
pub mod golden;
pub mod repro;
pub mod summary;

pub use error::{CliError, CliResult};
