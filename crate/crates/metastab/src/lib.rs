//! Command-line experiments, delimited-text outputs, run manifests and
//! thread-parallel ensembles for `metastab-core`.

pub mod config;
pub mod ensemble;
pub mod run;
pub mod table;

pub use config::{Command, RunConfig};
pub use run::{execute, replay, RunError};
