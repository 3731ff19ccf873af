//! Host-side companion to `nlgrad-core`: the JSON-lines record store, summary
//! tables, grid files, TOML configuration, image-set loading, a parallel
//! executor and the `nlgrad` command-line tool.

pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod grid;
pub mod image;
pub mod report;
pub mod store;

pub use error::{Error, Result};
pub use nlgrad_core as core;
