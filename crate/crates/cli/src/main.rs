mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dcm::dataset::Modality;

/// Diachronic cross-modal embeddings: synthesize data, train, evaluate, inspect.
#[derive(Debug, Parser)]
#[command(name = "dcm", version, arg_required_else_help = true)]
struct Cli {
    /// Worker threads for training and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted temporal structure.
    Synth(SynthArgs),
    /// Train the continuous model (or the static baseline with --static).
    Train(TrainArgs),
    /// Train one static model per month and align them.
    TrainBinned(TrainBinnedArgs),
    /// Run an evaluation protocol on a test set.
    Eval(EvalArgs),
    /// Print the embedding of one feature vector at a given time.
    Embed(EmbedArgs),
    /// Cross-modal evolution timeline for one instance.
    Neighbors(NeighborsArgs),
    /// Semantic dispersion series for one instance.
    Dispersion(DispersionArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator settings (JSON); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write stratified <stem>.train/.val/.test.jsonl next to --out.
    #[arg(long)]
    split: bool,
}

#[derive(Debug, Args)]
struct TrainOverrides {
    /// Run configuration (JSON with optional `train` and `min_bin_size`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    time_dim: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Drop every bias vector.
    #[arg(long)]
    no_bias: bool,
    /// First and last instant of the model's timeline (ISO-8601). Defaults to
    /// the span of the training and validation files.
    #[arg(long, num_args = 2, value_names = ["START", "END"])]
    span: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Time-agnostic baseline: time input frozen and no intra-category term.
    #[arg(long = "static")]
    static_model: bool,
    /// Per-epoch losses; defaults to <out stem>.train.csv.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Debug, Args)]
struct TrainBinnedArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Months with fewer training instances are skipped.
    #[arg(long)]
    min_bin_size: Option<usize>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    Coarse,
    Local,
    Bounded,
    Period,
    Dispersion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModalityArg {
    Visual,
    Text,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Visual => Modality::Visual,
            ModalityArg::Text => Modality::Text,
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Checkpoint file, or a directory written by train-binned.
    #[arg(long)]
    ckpt: PathBuf,
    /// Clamp timestamps outside the model's timeline instead of failing.
    #[arg(long)]
    clamp_time: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// Per-query CSV; a JSON summary is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Cut-off for period (default 50), local (10) and dispersion (5).
    #[arg(long)]
    k: Option<usize>,
    /// Period window in months; `inf` for category-only relevance.
    #[arg(long, default_value_t = 4.0)]
    window: f64,
    #[arg(long, default_value_t = 50)]
    queries_per_cat: usize,
    /// Months of the test set with fewer instances are skipped (local, bounded).
    #[arg(long, default_value_t = 1)]
    min_bin_size: usize,
    /// Seed for query sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Query instance for the dispersion protocol.
    #[arg(long)]
    query_id: Option<String>,
    #[arg(long, value_enum, default_value = "visual")]
    modality: ModalityArg,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// JSON array with the feature vector.
    #[arg(long)]
    input: PathBuf,
    /// ISO-8601 instant to project at.
    #[arg(long)]
    ts: String,
    #[arg(long, value_enum)]
    modality: ModalityArg,
}

#[derive(Debug, Args)]
struct NeighborsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    query_id: String,
    #[arg(long, value_enum, default_value = "visual")]
    modality: ModalityArg,
    #[arg(long, default_value_t = 20)]
    top_bins: usize,
    #[arg(long, default_value_t = 4)]
    per_bin: usize,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DispersionArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    query_id: String,
    #[arg(long, value_enum, default_value = "visual")]
    modality: ModalityArg,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad invocation detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<dcm::Error>() {
        Some(e) if e.is_numerical() => 3,
        Some(dcm::Error::InvalidConfig(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::TrainBinned(a) => commands::train_binned(a),
        Command::Eval(a) => commands::eval(a),
        Command::Embed(a) => commands::embed(a),
        Command::Neighbors(a) => commands::neighbors(a),
        Command::Dispersion(a) => commands::dispersion(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
