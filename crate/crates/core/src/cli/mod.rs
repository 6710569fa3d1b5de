//! Command-line front end: synth, prepare, train, eval, predict, bench.

mod args;
mod run;

pub use args::{Cli, Command};
pub use run::{
    exit_code, main_with_args, run, EXIT_CONFIG, EXIT_CONTRACT, EXIT_FAILURE, EXIT_MISSING_INPUT, EXIT_OK,
};
