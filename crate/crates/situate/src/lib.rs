//! File formats, configuration, reports and command implementations for
//! `situate-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;
mod error;
pub mod report;
pub mod session_io;
pub mod stream;

pub use error::{Error, Result};
