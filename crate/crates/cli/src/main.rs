// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The HENN Authors

//! `henn`: generate data, build indexes, and run benchmark sweeps.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "henn", version, about = "Hierarchical eps-net navigation graph index")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset, queries, and exact ground truth to a directory.
    Gen(RunArgs),
    /// Build an index, print its statistics, and optionally save it.
    Build(RunArgs),
    /// Print the statistics of a saved index.
    Info {
        /// Index file written by `build`.
        index: PathBuf,
    },
    /// Sweep search beam widths for each layer mode and emit CSV rows.
    Bench(RunArgs),
    /// Estimate the recall bound of single-layer graphs.
    RecallBound(RunArgs),
}

/// Marks bad invocations (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<henn_core::Error>() {
            return match e {
                henn_core::Error::InvalidArgument(_) => 2,
                henn_core::Error::DimensionMismatch { .. }
                | henn_core::Error::Format { .. }
                | henn_core::Error::NotFound(_)
                | henn_core::Error::Io(_) => 3,
                henn_core::Error::ConstructionFailure { .. } | henn_core::Error::Unsupported(_) => 4,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<toml::de::Error>() {
            return 3;
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let res = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Build(args) => commands::build(args),
        Command::Info { index } => commands::info(&index),
        Command::Bench(args) => commands::bench(args),
        Command::RecallBound(args) => commands::recall_bound(args),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
