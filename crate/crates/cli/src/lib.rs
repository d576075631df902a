//! File formats and command-line plumbing around `formation-core`.
//!
//! * [`scenario`]: TOML scenario files and the built-in presets.
//! * [`weights_file`]: binary container for learned RBF weights.
//! * [`trace_csv`]: CSV traces.
//! * [`report`]: convergence report and per-figure CSVs.
//! * [`verify`]: the acceptance pipeline behind `formation verify`.

pub mod error;
pub mod report;
pub mod scenario;
pub mod trace_csv;
pub mod verify;
pub mod weights_file;

pub use error::{CliError, Result};
