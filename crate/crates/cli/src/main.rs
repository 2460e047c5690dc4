use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quatnet::train::Engine;

mod commands;
mod config;
mod demos;
mod failure;

use commands::{Baseline, GradCheckArgs, InjectedFault, OutputFormat, Split, TrainArgs};
use failure::Failure;

/// Quaternion neural networks for multivariate time series.
#[derive(Debug, Parser)]
#[command(name = "quatnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum EngineArg {
    Ghr,
    Ad,
    Both,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Ghr => Engine::Ghr,
            EngineArg::Ad => Engine::Ad,
            EngineArg::Both => Engine::Both,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a CSV series (one column per channel) into quaternion chunks.
    Compress {
        input: PathBuf,
        #[arg(long, short = 'l')]
        chunk_len: usize,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        /// Write chunk means instead of quaternions.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Train a model described by a JSON run config.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Report the accuracy of a checkpoint on the data of a run config.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Check both gradient engines against finite differences.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file with check settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Relative tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        abs_tolerance: Option<f64>,
        #[arg(long)]
        relation_tolerance: Option<f64>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<InjectedFault>,
    },
    /// Print the derivative counterexamples and the engine comparison.
    Demos {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Compress { input, chunk_len, out, format, baseline } => {
            commands::compress_cmd(&input, chunk_len, &out, format, baseline)
        }
        Command::Train { config, seed, engine, checkpoint, history } => commands::train_cmd(TrainArgs {
            config,
            seed,
            engine: engine.map(Engine::from),
            checkpoint,
            history,
        }),
        Command::Eval { checkpoint, config, seed, split } => commands::eval_cmd(&checkpoint, &config, seed, split),
        Command::Gradcheck { seed, config, trials, tolerance, abs_tolerance, relation_tolerance, inject_fault } => {
            commands::gradcheck_cmd(GradCheckArgs {
                config,
                seed,
                trials,
                tolerance,
                abs_tolerance,
                relation_tolerance,
                fault: inject_fault,
            })
        }
        Command::Demos { seed, samples } => {
            print!("{}", demos::report(seed, samples)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
