//! Command-line front end. Every command validates its inputs before writing
//! anything, and every output file is written atomically.

mod commands;
pub mod config;
pub mod dataset;
mod graph_spec;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;
pub use config::{EvalConfig, ExperimentConfig, PathsConfig};
pub use graph_spec::GraphSpec;

#[derive(Debug, Parser)]
#[command(name = "adhoc-sv", version, about = "Graph aggregation and channel selection for ad-hoc array speaker verification")]
pub struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate scenes and per-channel features.
    Simulate,
    /// Build an adjacency matrix (and selection mask) for a scene.
    Graph(GraphArgs),
    /// Train the aggregation model and classifier head.
    Train(TrainArgs),
    /// Score trials and compute the equal error rate.
    Eval(EvalArgs),
    /// Tabulate report.json files.
    Report(ReportArgs),
    /// Seeded MEAN / GCN / GCN+prior comparison on synthetic data.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Scene JSON file.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// `complete[:N]`, `span:T:DELTA`, `knn:K`, or `prior:RHO[:ori][:noise[=R]]`.
    #[arg(long)]
    pub spec: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Trials CSV (`enroll_id,test_id,label`); generated from the test split when absent.
    #[arg(long)]
    pub trials: Option<PathBuf>,
    /// Randomly keep this many channels per test utterance.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Write the channels each utterance kept to selection.json.
    #[arg(long)]
    pub dump_selection: bool,
    /// Write single-channel EERs per node to per_node.csv.
    #[arg(long)]
    pub per_node: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files, or directories containing report.json.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Number of seeds, starting at 1 (or at --seed).
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
}
