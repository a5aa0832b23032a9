mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Solve(a) => ("solve", commands::solve(a)),
        Command::SolveDiscounted(a) => ("solve-discounted", commands::solve_discounted(a)),
        Command::Evaluate(a) => ("evaluate", commands::evaluate(a)),
        Command::Search(a) => ("search", commands::search(a)),
        Command::Check(a) => ("check", commands::check(a)),
        Command::Reproduce(a) => ("reproduce", commands::reproduce(a)),
        Command::Simulate(a) => ("simulate", commands::simulate_cmd(a)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(failure) => {
            eprintln!("{}", failure.with_context("command", name).to_json());
            ExitCode::from(1)
        }
    }
}
