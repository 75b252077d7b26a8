//! Command-line driver: configuration, subcommand dispatch, and the file
//! formats the pipeline reads and writes.

pub mod config;
mod commands;
pub mod files;

pub use commands::{
    cmd_bench, cmd_evaluate, cmd_segment, cmd_synth, run, segment_defaults_for_tests, BenchArgs,
    Cli, Command, EvaluateArgs, SegmentArgs, SynthArgs,
};

/// CLI failure classes, mapped to exit codes (config -> 2, input -> 1).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Input(String),
}

impl From<pulsedtw::Error> for CliError {
    fn from(e: pulsedtw::Error) -> CliError {
        match e {
            pulsedtw::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Input(msg) => write!(f, "input error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}
