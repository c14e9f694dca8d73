//! Host-side companion to `neurocomm-core`: experiment configs, the event
//! dataset and checkpoint formats, `alist` parity matrices, a thread-pool
//! executor, trace files and the subcommands behind the `neurocomm` binary.

pub mod alist;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod exec;
pub mod loader;
pub mod runner;
pub mod trace;

pub use config::{ExperimentConfig, RunKind, SweepAxis};
pub use error::{Error, Result};
pub use runner::{Experiment, Overrides};
