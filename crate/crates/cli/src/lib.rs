//! Library side of the `proscale` binary: file formats, report shaping, and
//! the command implementations, kept separate so they can be tested
//! in-process.

pub mod commands;
pub mod error;
pub mod report;
pub mod runconfig;
pub mod tensorfile;

pub use error::{CliError, EXIT_CHECK, EXIT_IO, EXIT_OK, EXIT_VALIDATION};
