//! Batch front end: `oxydyn --config run.json --out results/`.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 configuration error, 3 numerical
//! failure, 4 threshold search failure (bracket or branch).

pub mod config;
pub mod run;

pub use config::{emit_config, parse_config, ConfigError, RunConfig, Task, Thresholds};
pub use run::{execute, run_task, Failure};
