//! Command-line front end: run configs, training and evaluation commands,
//! the duality sweep, property suites and scatter plots.

pub mod commands;
pub mod config;
pub mod svg;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sgan_core::gan::GanError;
use sgan_duality::DualityError;

/// A computation produced a non-finite value or a property check failed.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct NumericFailure(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

/// 2 for numeric failures anywhere in the error chain, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let numeric = err.chain().any(|e| {
        e.is::<NumericFailure>()
            || matches!(e.downcast_ref::<GanError>(), Some(GanError::NonFinite { .. }))
            || matches!(e.downcast_ref::<DualityError>(), Some(DualityError::NonFinite))
    });
    if numeric {
        EXIT_NUMERIC
    } else {
        EXIT_INVALID
    }
}

#[derive(Debug, Parser)]
#[command(name = "sgan", version, about = "Multi-generator GAN experiments and exact duality checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a JSON run config; writes config.json, metrics.csv and checkpoint.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score samples of a checkpoint (mode coverage, or pixel statistics for images).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run config; defaults to config.json next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Probe the local minimax gap around a checkpoint.
    Gap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        k: usize,
        #[arg(long, default_value_t = 1e-3)]
        probe_lr: f64,
    },
    /// Exact w*, q* and gap bound of a quadratic payoff family over a range of I.
    Duality {
        #[arg(long, value_enum, default_value = "pm1")]
        family: commands::Family,
        /// One value or an inclusive range a:b.
        #[arg(long = "I", default_value = "1:16")]
        generators: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run seeded property suites.
    Verify {
        /// One of grad-check, infconv, strong-duality, shapley-folkman,
        /// caratheodory, theorem4, or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Scatter plot of checkpoint samples as SVG.
    Plot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
}

/// Executes a parsed command and returns the files written.
pub fn run(cli: Cli) -> anyhow::Result<Vec<PathBuf>> {
    match cli.command {
        Command::Train { config, out, seed } => commands::train(&config, out.as_deref(), seed),
        Command::Eval { checkpoint, config, out, seed } => {
            commands::eval(&checkpoint, config.as_deref(), out.as_deref(), seed)
        }
        Command::Gap { checkpoint, config, out, seed, k, probe_lr } => {
            commands::gap(&checkpoint, config.as_deref(), out.as_deref(), seed, k, probe_lr)
        }
        Command::Duality { family, generators, out, seed } => {
            let range = config::parse_range(&generators)?;
            commands::duality(family, range, out.as_deref(), seed)
        }
        Command::Verify { suite, out, seed } => commands::verify(&suite, out.as_deref(), seed),
        Command::Plot { checkpoint, config, out, seed, samples } => {
            commands::plot(&checkpoint, config.as_deref(), &out, seed, samples)
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
