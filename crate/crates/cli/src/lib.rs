//! Batch front end for the `mgmask` library.
//!
//! Every subcommand takes files or directories, processes the sorted file list
//! on a worker pool, writes outputs atomically, and records a `stats.json`
//! report ordered by input name. A run exits 0 when every file succeeded and 1
//! when any file failed; usage errors exit 2.

mod commands;
mod config;
mod inputs;
mod report;

pub use config::{Cli, Command, CommonArgs, InputFormat};
pub use report::{Report, STATS_VERSION};

use anyhow::Result;

/// Runs one invocation. `Ok(false)` means at least one input failed.
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Estimate(args) => commands::estimate(args),
        Command::Mask(args) => commands::mask(args),
        Command::Saliency(args) => commands::saliency(args),
        Command::Oracle(args) => commands::oracle(args),
        Command::Info(args) => commands::info(args),
    }
}
