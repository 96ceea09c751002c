//! File formats, experiment orchestration, reports and the `spt` command
//! line on top of [`spt_core`].

pub use spt_core as core;

pub mod artifact;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;
pub mod rule;

pub use error::{Error, Result};
