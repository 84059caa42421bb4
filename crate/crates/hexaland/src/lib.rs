//! Scenario files, CSV logs, batch runs and the command-line front end for
//! the `hexaland-core` simulator.

pub mod config;
pub mod error;
pub mod logs;
pub mod runner;
pub mod sweep;
pub mod table;

pub use error::{HarnessError, Result};
