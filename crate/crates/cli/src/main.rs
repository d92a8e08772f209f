mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

fn main() -> ExitCode {
    // clap already exits with 2 on usage errors
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Layout(a) => commands::layout(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Inpaint(a) => commands::inpaint_cmd(a),
        Command::Features(a) => commands::features(a),
        Command::Weights(a) => commands::weights(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Configuration problems exit with 2; anything wrong with the inputs or
/// outputs (missing files, malformed data, I/O) with 3.
fn exit_code(e: &anyhow::Error) -> u8 {
    let core = e.chain().find_map(|c| c.downcast_ref::<dmas_core::Error>());
    match core {
        Some(c) if c.is_config() => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}
