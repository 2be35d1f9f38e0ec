//! Reproducible experiments for the quantum WGAN: preprocessing, training,
//! generation, evaluation and MPS fidelity sweeps, each driven by one JSON
//! config.
//!
//! Exit codes: 0 ok, 2 config or validation failure, 3 I/O failure,
//! 4 numerical failure.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{BackendKind, LoadedConfig, Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qgan", version, about = "Quantum WGAN experiments on financial return series")]
pub struct Cli {
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// MPS bond dimension; selects the mps backend for training.
    #[arg(long)]
    pub bond: Option<usize>,
}

impl Common {
    pub fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, epochs: self.epochs, backend: self.backend, bond: self.bond }
    }

    pub fn load(&self) -> Result<LoadedConfig, CliError> {
        LoadedConfig::load(&self.config, &self.overrides())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn the price CSV into the training window batch.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Train, checkpointing and resuming inside the run directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Discard an existing run directory instead of resuming it.
        #[arg(long)]
        fresh: bool,
        /// Stop after this many epochs, leaving a resumable checkpoint.
        #[arg(long)]
        halt_after: Option<usize>,
    },
    /// Sample return windows from a checkpoint.
    Generate {
        /// Checkpoint directory written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "generated.csv")]
        out: PathBuf,
        /// Also write the raw expectation values next to the output.
        #[arg(long)]
        raw: bool,
    },
    /// Score generated windows against a reference.
    Evaluate {
        /// Windows CSV or `date,close` price CSV.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        tau_max: Option<usize>,
        /// Supplies window, stride and metric settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "evaluation")]
        out: PathBuf,
    },
    /// MPS fidelity against the exact state over depths and bond dimensions.
    FidelitySweep {
        #[command(flatten)]
        common: Common,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match cli.command {
        Command::Preprocess { common } => commands::preprocess::run(&common.load()?),
        Command::Train { common, fresh, halt_after } => {
            commands::train::run(&common.load()?, commands::train::Options { fresh, halt_after })
        }
        Command::Generate { checkpoint, count, seed, out, raw } => {
            commands::generate::run(&checkpoint, count, seed, &out, raw)
        }
        Command::Evaluate { reference, generated, tau_max, config, out } => {
            let loaded = config.map(|p| LoadedConfig::load(&p, &Overrides::default())).transpose()?;
            commands::evaluate::run(&reference, &generated, tau_max, loaded.as_ref(), &out)
        }
        Command::FidelitySweep { common } => commands::sweep::run(&common.load()?),
    }
}
