//! File formats, configuration, reports and the command-line front end for
//! the `pimjoin-core` model.

pub mod cli;
pub mod config;
pub mod dump;
pub mod error;
pub mod report;
pub mod tracefile;
pub mod workload_io;

pub use error::{AppError, AppResult};
