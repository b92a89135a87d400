//! Command-line front end: configuration, run directories, and the
//! `steady`, `lambda1`, `evolve`, `rate`, `sweep` and `validate` commands.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// mirror the stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod validate;

pub use error::{CliError, Result};

/// Exit code when supercritical growth is detected under `--expect-subcritical`.
pub const EXIT_SUPERCRITICAL: u8 = 4;
/// Exit code for a numerical failure.
pub const EXIT_NUMERICAL: u8 = 3;
