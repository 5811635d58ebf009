//! Pipeline stages behind the `twinrom` command: snapshot generation, DPIM
//! construction, DL-ROM training, inference and reports.

pub mod autoparam;
pub mod commands;
pub mod config;
pub mod error;
pub mod rom;
pub mod snapshots;
pub mod table;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
