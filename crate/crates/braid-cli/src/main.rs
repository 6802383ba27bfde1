//! `braid` — config-driven driver for the alignment pipeline.
//!
//! Subcommands: generate, plan, train, grow, eval, retrieve, dump, report.
//! Every run writes its outputs (and its fully resolved configuration)
//! under a fresh run directory named by timestamp and seed; on failure the
//! partial run directory is removed and a single machine-parsable
//! `class: message` line goes to stderr.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "braid", version, about = "Expandable multi-modal alignment pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Run configuration file (JSON). Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Output root; a run directory is created under it.
    #[arg(long, env = "BRAID_OUT_ROOT", default_value = "braid-runs")]
    out: PathBuf,

    /// Ablation switch (repeatable): disable-prototype-protection,
    /// fixed-equal-weights, negatives-only-denominator.
    #[arg(long = "ablation")]
    ablations: Vec<String>,

    /// Growth-order heuristic; overrides the config file.
    #[arg(long, value_parser = ["given", "given-order", "largest-first", "spanning-walk"])]
    plan_heuristic: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic paired datasets from a topology description.
    Generate {
        #[command(flatten)]
        common: CommonOpts,
        /// Topology JSON file, or one of the built-ins: desk-default, desk-small.
        #[arg(long, default_value = "desk-default")]
        topology: String,
    },
    /// Resolve a growth plan over generated datasets.
    Plan {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory holding .brds dataset files.
        #[arg(long)]
        datasets: PathBuf,
        /// Modalities to align, in order (comma separated); defaults to
        /// every modality found in the datasets.
        #[arg(long, value_delimiter = ',')]
        modalities: Vec<String>,
    },
    /// Run the initial binary alignment phase on a fresh model.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        datasets: PathBuf,
        /// Topology JSON (as echoed by generate) describing the encoders.
        #[arg(long)]
        topology: PathBuf,
        /// Plan JSON (as written by plan).
        #[arg(long)]
        plan: PathBuf,
    },
    /// Continue a plan from a checkpoint: run growth phases.
    Grow {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Checkpoint produced by train (or an earlier grow).
        #[arg(long)]
        checkpoint: PathBuf,
        /// How many phases to run (default: all remaining).
        #[arg(long)]
        phases: Option<usize>,
    },
    /// One-shot evaluation of every aligned modality, plus optional fusions.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Fusion task (repeatable): comma-separated modalities, '@', dataset id
        /// (e.g. imu,video@imu_video_eval).
        #[arg(long = "fuse")]
        fusions: Vec<String>,
    },
    /// Cross-modal retrieval metrics for one dataset.
    Retrieve {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset id to retrieve over.
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        query: String,
        #[arg(long)]
        gallery: String,
    },
    /// Export unified-space embeddings of a dataset's test split as JSONL.
    Dump {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: String,
    },
    /// Aggregate a run directory into plot-ready tables.
    Report {
        #[command(flatten)]
        common: CommonOpts,
        /// Run directory (as produced by train/grow/eval).
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.class(), e);
            ExitCode::FAILURE
        }
    }
}
