use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(
    name = "labelaug",
    version,
    about = "Label-guided augmentation for prompt-based few-shot classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus, labeled pool, test split, lexicon and label words.
    GenData(GenDataArgs),
    /// Pretrain the micro masked LM on a text corpus and save a checkpoint.
    Pretrain(PretrainArgs),
    /// Search label words per class on a training file.
    SearchVerbalizer(SearchArgs),
    /// Tune a checkpoint on instance/label-word pairs.
    Tune(TuneArgs),
    /// Accuracy of a checkpoint on a labeled file.
    Eval(EvalArgs),
    /// Run one or more conditions over the configured seeds.
    Experiment(ExperimentArgs),
    /// Vary k_y or K over a list of values.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Synthetic spec (JSON); defaults apply to missing fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ModelArgs {
    /// Model dimensions as JSON; `vocab_size` is filled in.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    tie_output: bool,
}

#[derive(Args)]
struct PretrainArgs {
    /// One sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Existing vocabulary; built from the corpus when absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Where to write the built vocabulary (default: `<out>.vocab.txt`).
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    min_freq: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    mask_fraction: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-epoch loss CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// `manual` (`it is [mask]`) or `template-free`.
    #[arg(long, default_value = "manual")]
    template: String,
}

#[derive(Args)]
struct DataArgs {
    /// `jsonl` or `tsv`; inferred from the extension when absent.
    #[arg(long)]
    format: Option<String>,
    /// Comma-separated label names fixing the class order.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    model: CheckpointArgs,
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Draw a K-shot training split from the file first.
    #[arg(long)]
    k_shot: Option<usize>,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    #[arg(long, default_value_t = 3)]
    k_y: usize,
    #[arg(long, default_value_t = 6)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Tie-break seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    /// Reject verbalizers that reuse a word across classes.
    #[arg(long)]
    strict: bool,
    /// `probability` or `log-probability`.
    #[arg(long, default_value = "probability")]
    score_space: String,
    /// Verbalizer file to write.
    #[arg(long)]
    out: PathBuf,
    /// Search report JSON (default: `<out>.json`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    model: CheckpointArgs,
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    verbalizer: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    shuffle_seed: u64,
    /// `mean` or `sum`.
    #[arg(long, default_value = "mean")]
    loss_scaling: String,
    /// Per-epoch loss CSV.
    #[arg(long)]
    loss_trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: CheckpointArgs,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    verbalizer: PathBuf,
    /// `max` or `mean`.
    #[arg(long, default_value = "max")]
    aggregation: String,
    /// Per-example prediction CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Accuracy summary JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct OverrideArgs {
    /// Experiment configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration field by dotted path, e.g. `tune.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated seeds, e.g. `1,2,3,4,5`.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    k_shot: Option<usize>,
    #[arg(long)]
    k_y: Option<usize>,
    /// `manual` or `template-free`.
    #[arg(long)]
    template: Option<String>,
    /// `auto`, `manual` or `single`.
    #[arg(long)]
    verbalizer: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Use a pretrained checkpoint instead of pretraining.
    #[arg(long, requires = "vocab")]
    checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    vocab: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: OverrideArgs,
    /// JSON file with named condition overrides; one condition from the
    /// configuration alone when absent.
    #[arg(long)]
    conditions: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: OverrideArgs,
    /// `ky` or `K`.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::SearchVerbalizer(a) => commands::search(a),
        Command::Tune(a) => commands::tune(a),
        Command::Eval(a) => commands::eval(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|cause| {
        cause
            .downcast_ref::<labelaug::Error>()
            .is_some_and(labelaug::Error::is_config)
            || cause.is::<commands::UsageError>()
    });
    if config {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}
