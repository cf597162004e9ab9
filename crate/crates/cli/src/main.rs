//! `selfseed` command-line driver.
//!
//! Exit status: 0 on success, 2 for usage or input errors, 3 when training
//! diverges. Failures print a single line starting with the error kind.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SelectSeed(a) => commands::select_seed(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::FullRun(a) => commands::full_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(if err.is_numerical() { 3 } else { 2 })
        }
    }
}
