//! Commands behind the `gmfn` binary: training, evaluation, ablation sweeps,
//! feature dumps and checkpoint inspection.

pub mod ablate;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod features;
pub mod plot;

pub use checkpoint::Checkpoint;
pub use config::{preset, DataSource, RunConfig};
pub use error::{CliError, Result};
