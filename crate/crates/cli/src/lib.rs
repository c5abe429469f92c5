//! Configuration, commands and artifacts of the `beso` runner.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::Outcome;
pub use config::{ConfigError, RunConfig};

/// Exit status for an invalid configuration or an inapplicable request.
pub const EXIT_INVALID: i32 = 2;
/// Exit status when a path is not certified or a check fails.
pub const EXIT_UNCERTIFIED: i32 = 3;

/// Maps a command result to the process exit status.
pub fn exit_code(result: &anyhow::Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::ChecksFailed(_)) => EXIT_UNCERTIFIED,
        Err(e) if e.is::<ConfigError>() => EXIT_INVALID,
        Err(_) => 1,
    }
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod book {}
