//! `cmert`: generate synthetic streams, train, stream inference, evaluate
//! and diagnose. Exit codes: 0 success, 2 usage or input error, 3 runtime
//! failure.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmert::eval::EvalOptions;
use cmert::partition::Preset;

use commands::{DiagnoseArgs, DiagnoseMode, EvalArgs, GenArgs, InferArgs, TrainArgs};
use error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "cmert", version, about = "Online action detection with context-enhanced memory refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic grammar and write training and held-out streams.
    Gen {
        /// JSON overriding fields of the default grammar.
        #[arg(long)]
        grammar: Option<PathBuf>,
        /// Frames per stream.
        #[arg(long)]
        length: usize,
        /// Number of training streams (written to OUT/train).
        #[arg(long, default_value_t = 1)]
        streams: usize,
        /// Number of held-out streams (written to OUT/test).
        #[arg(long, default_value_t = 0)]
        holdout: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on every stream in a directory.
    Train {
        /// JSON with optional `partition`, `model` and `train` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start from a dataset preset instead of the desk defaults.
        #[arg(long)]
        preset: Option<Preset>,
        /// Overrides the training and initialization seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the step budget.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the online simulation over a stream file or directory.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        /// Latency in frames; defaults to the checkpoint's.
        #[arg(long)]
        delta: Option<usize>,
        /// Reuse the long-term branch while its window is unchanged.
        #[arg(long)]
        cache: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score prediction dumps against stream labels.
    Eval {
        /// Dump file, or directory of dumps.
        #[arg(long)]
        pred: PathBuf,
        /// Stream file, or directory of streams with matching names.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start-point tolerance of the point-wise F1, in seconds.
        #[arg(long, default_value_t = 1.0)]
        pf1_threshold: f64,
        /// IoU threshold of the segment-wise F1.
        #[arg(long, default_value_t = 0.25)]
        sf1_iou: f64,
    },
    /// Per-position loss profile or non-causal leakage audit, as CSV.
    Diagnose {
        #[arg(long)]
        ckpt: PathBuf,
        /// Streams for the per-position profile.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: DiagnoseMode,
        /// Seed of the random input used by the leakage audit.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Anchor stride of the per-position profile.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen {
            grammar,
            length,
            streams,
            holdout,
            seed,
            out,
        } => commands::gen(GenArgs {
            grammar,
            length,
            streams,
            holdout,
            seed,
            out,
        }),
        Command::Train {
            config,
            data,
            out,
            preset,
            seed,
            steps,
        } => commands::train_cmd(TrainArgs {
            config,
            data,
            out,
            preset,
            seed,
            steps,
        }),
        Command::Infer {
            ckpt,
            stream,
            delta,
            cache,
            out,
        } => commands::infer(InferArgs {
            ckpt,
            stream,
            delta,
            cache,
            out,
        }),
        Command::Eval {
            pred,
            gt,
            out,
            pf1_threshold,
            sf1_iou,
        } => commands::eval(EvalArgs {
            pred,
            gt,
            out,
            options: EvalOptions {
                pf1_threshold_s: pf1_threshold,
                sf1_iou,
            },
        }),
        Command::Diagnose {
            ckpt,
            data,
            mode,
            seed,
            stride,
            out,
        } => commands::diagnose(DiagnoseArgs {
            ckpt,
            data,
            mode,
            seed,
            stride,
            out,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
