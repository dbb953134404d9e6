//! Command-line front end: mesh ingestion, grid building, solving,
//! spectral diagnostics and exports.

pub mod args;
pub mod commands;
pub mod error;
pub mod field_file;

pub use args::Cli;
pub use commands::Status;
pub use error::{CliError, Result};
pub use field_file::{CellRecord, FieldFile, FORMAT_VERSION};

use args::Command;

/// Runs one command. `Ok(Status::NotConverged)` is a warning, not an error.
pub fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Spectral(a) => commands::spectral(a).map(|_| Status::Converged),
        Command::Export(a) => commands::export(a).map(|_| Status::Converged),
        Command::Generate(a) => commands::generate(a).map(|_| Status::Converged),
    }
}
