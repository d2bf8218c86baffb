//! File formats, dataset handling, training driver and command line for the
//! TransFuse destruction-reconstruction fusion network. The numerical work
//! lives in `transfuse-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
mod error;
pub mod fusion;
pub mod io;
pub mod report;
pub mod train;

pub use error::{Error, Result};
pub use transfuse_core as core;
