mod args;
mod bundle;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cp(a) => commands::cmd_cp(a),
        Command::Acmtf(a) => commands::cmd_acmtf(a),
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Stats(a) => commands::cmd_stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
