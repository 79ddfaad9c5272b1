//! Command-line pipeline: generate data, train, evaluate, probe, sweep.

pub mod args;
pub mod commands;
pub mod config;

use salab::{ErrorCategory, Result};

pub use args::{Cli, Command};
pub use commands::{cmd_band_energy, cmd_eval, cmd_gen_data, cmd_probe, cmd_sweep, cmd_train};
pub use config::RunConfig;

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(&mut cfg, a),
        Command::Train(a) => cmd_train(&mut cfg, a),
        Command::Eval(a) => cmd_eval(&mut cfg, a),
        Command::Probe(a) => cmd_probe(&mut cfg, a),
        Command::Sweep(a) => cmd_sweep(&mut cfg, a),
        Command::BandEnergy(a) => cmd_band_energy(&mut cfg, a),
    }
    .map(|_| ())
}

/// Process exit status for an error.
pub fn exit_code(e: &salab::Error) -> i32 {
    match e.category() {
        ErrorCategory::Usage => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
    }
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
