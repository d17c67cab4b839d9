//! `hcar`: train, evaluate, attack and inspect hierarchical compare-aggregate readers.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hcar::model::Aggregator;
use hcar::numeric::Precision;

#[derive(Parser, Debug)]
#[command(name = "hcar", version, about = "Hierarchical compare-aggregate reader for multiple-choice QA")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON file with optional `scale`, `model`, `train` and `synthetic` sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dataset JSON file.
    #[arg(long, global = true, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Embedding vectors; defaults to the dataset path with a `.vec` extension.
    #[arg(long, global = true, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Output directory (for `synth`, the dataset file to write).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub aggregator: Option<AggregatorArg>,
    #[arg(long, global = true, value_enum)]
    pub precision: Option<PrecisionArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AggregatorArg {
    Cnn,
    Lstm,
}

impl From<AggregatorArg> for Aggregator {
    fn from(a: AggregatorArg) -> Self {
        match a {
            AggregatorArg::Cnn => Aggregator::Cnn,
            AggregatorArg::Lstm => Aggregator::RnnLstm,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for hcar::corpus::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => hcar::corpus::Split::Train,
            SplitArg::Val => hcar::corpus::Split::Val,
            SplitArg::Test => hcar::corpus::Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Addc,
    Addq,
    Addqa,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset and its embeddings.
    Synth,
    /// Train one model; writes `<id>.ckpt` and `<id>.history.json`.
    Train,
    /// Accuracy of a checkpoint on a split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
    },
    /// Train a multi-seed pool; writes checkpoints and `pool.json`.
    Pool,
    /// Majority vote of the top pool members.
    EnsembleEval {
        /// `pool.json` written by `pool`.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
    },
    /// Run an adversarial attack and write its outcomes as JSON lines.
    Attack {
        #[command(subcommand)]
        kind: AttackCommand,
    },
    /// Post-attack accuracy of models on outcomes optimized elsewhere.
    Transfer {
        /// Outcome files from `attack` (repeatable).
        #[arg(long, required = true)]
        outcomes: Vec<PathBuf>,
        /// Checkpoints to replay against (repeatable).
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
    },
    /// How often annotated evidence sentences get the top relevance score.
    Relevance {
        /// Checkpoints to average over (repeatable).
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Use the selected members of a pool instead.
        #[arg(long, conflicts_with = "checkpoint")]
        pool: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
    },
    /// Write relevance and word-importance scores for one question.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        qid: String,
        /// Apply the recorded perturbation for this question first.
        #[arg(long)]
        outcomes: Option<PathBuf>,
        /// Skip the PPM heatmap.
        #[arg(long)]
        no_image: bool,
    },
    /// McNemar test between two evaluation records.
    Mcnemar { a: PathBuf, b: PathBuf },
}

#[derive(Args, Debug, Clone)]
pub struct AttackArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "val")]
    pub split: SplitArg,
    /// Number of randomly chosen questions.
    #[arg(long, default_value_t = 200)]
    pub questions: usize,
}

#[derive(Subcommand, Debug)]
pub enum AttackCommand {
    /// Rule-based lexical substitution in the question.
    Lexsub {
        #[command(flatten)]
        common: AttackArgs,
        #[arg(long)]
        rules: PathBuf,
    },
    /// Replace the k most important words of the most relevant sentence.
    Wordwb {
        #[command(flatten)]
        common: AttackArgs,
        #[arg(long)]
        k: usize,
    },
    /// Greedy search for an appended distractor sentence.
    Addany {
        #[command(flatten)]
        common: AttackArgs,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 2)]
        epochs: usize,
    },
    /// Remove the most relevant sentence.
    Sentrm {
        #[command(flatten)]
        common: AttackArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
