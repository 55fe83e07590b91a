//! `sonclust` command-line front end.
//!
//! Exit codes: 0 success, 2 finished without reaching the tolerance,
//! 1 usage, input or runtime error. Errors go to standard error as
//! `error[code]: message`.

mod cli;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cli::{Cli, Command};
use commands::Status;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            if informational {
                return ExitCode::SUCCESS;
            }
            eprintln!("error[usage]: invalid command line");
            return ExitCode::from(1);
        }
    };
    let threads = sonclust::par::init_threads_from_env();
    let outcome = match &cli.command {
        Command::Solve(args) => commands::cmd_solve(args, threads),
        Command::Path(args) => commands::cmd_path(args, threads),
        Command::Bench(args) => commands::cmd_bench(args, threads),
    };
    match outcome {
        Ok(Status::Converged) => ExitCode::SUCCESS,
        Ok(Status::NotConverged(msg)) => {
            eprintln!("error[not-converged]: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
