//! Library side of the `zifqr` command-line tool.

pub mod commands;
pub mod error;
pub mod io;
pub mod transform;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
