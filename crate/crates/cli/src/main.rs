//! `mfeat`: train, evaluate and transfer model features from the command line.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// A failed command: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn diverged(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DIVERGED,
            message: message.into(),
        }
    }
}

impl From<model_features::Error> for Failure {
    fn from(e: model_features::Error) -> Self {
        match e {
            model_features::Error::Diverged { .. } => Self::diverged(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Transfer(a) => commands::transfer_cmd(a),
        Command::Oracle(a) => commands::oracle_cmd(a),
        Command::Mdp(a) => commands::mdp_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
