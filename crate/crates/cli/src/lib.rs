//! Command-line front end for the registration engine.
//!
//! Four subcommands: `register` aligns one cloud pair, `bench` sweeps the
//! consecutive frame pairs of a sequence directory, `compare` repeats a
//! benchmark across NN backends and enforces result equivalence before
//! reporting speedups, and `model` evaluates the streaming-pipeline latency
//! model.
//!
//! Exit codes: 0 on success (and convergence), 1 on any error (including
//! usage errors), 2 when registration ran but did not converge.

pub mod cli;
pub mod commands;
pub mod config;
pub mod report;

use std::process::ExitCode;

pub use cli::{Cli, Command};

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Register(args) => commands::register::run(&args),
        Command::Bench(args) => commands::bench::run(&args),
        Command::Compare(args) => commands::compare::run(&args),
        Command::Model(args) => commands::model::run(&args),
    }
}
