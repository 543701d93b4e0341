//! Experiment runner for the streetperc percolation engine.
//!
//! Subcommands dispatch to the library's Monte-Carlo and diagnostic
//! operations and persist results as JSON lines (first record of every file
//! is a manifest echoing the effective configuration). Exit codes: 0 on
//! success, 1 on configuration errors, 2 on runtime errors.

mod cli;
mod run;

fn main() {
    std::process::exit(cli::main_with_exit_code());
}
