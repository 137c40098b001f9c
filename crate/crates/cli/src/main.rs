//! `dub`: run the speech-unit back-translation pipeline stage by stage or
//! end to end.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dub_core::ErrorKind;

#[derive(Debug, Parser)]
#[command(name = "dub", version, about = "Back-translation experiments over quantized speech units")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: `output_dir` from the config, else `out`).
    #[arg(long, global = true)]
    pub outdir: Option<PathBuf>,
    /// Overrides `train.max_steps`.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the synthetic world and sample the corpora.
    GenWorld,
    /// Fit the k-means codebook and extract unit sequences.
    ExtractUnits,
    /// Learn the joint subword and unit vocabulary.
    LearnVocab,
    /// Train a unit-to-text model, optionally on a back-translation mixture.
    TrainU2tt(TrainU2ttArgs),
    /// Train the text-to-unit model.
    TrainT2ut,
    /// Back-translate monolingual text into pseudo-units.
    GenerateBt(GenerateBtArgs),
    /// Run the full pipeline and write the experiment report.
    DubRun,
    /// Score hypothesis files, or a checkpoint on a held-out split.
    Evaluate(EvaluateArgs),
    /// Re-render report.md and curve.csv from report.json.
    Report,
}

#[derive(Debug, Args)]
pub struct TrainU2ttArgs {
    /// Mix in the back-translated pairs from corpus/bt.jsonl.
    #[arg(long)]
    pub with_bt: bool,
    /// Use only pairs generated from the first N monolingual sentences.
    #[arg(long, requires = "with_bt")]
    pub amount: Option<usize>,
    /// Original-pair upsampling rate (default: config, else automatic).
    #[arg(long)]
    pub upsample_rate: Option<usize>,
    /// Initialize unit embeddings from codebook centroids.
    #[arg(long)]
    pub pretrained_embedding: bool,
    /// Checkpoint name under ckpt/ (default: `dub` with BT, else `baseline`).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Greedy,
    Beam,
    Sample,
    Topk,
}

#[derive(Debug, Args)]
pub struct GenerateBtArgs {
    /// Decoding method (default: `mixture.bt_method` from the config).
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Candidates kept per step for `topk`
    #[arg(long)]
    pub k: Option<usize>,
    /// Hypotheses kept for `beam`
    #[arg(long)]
    pub beam_size: Option<usize>,
    /// Monolingual sentences to back-translate (default: largest configured amount).
    #[arg(long)]
    pub amount: Option<usize>,
    /// Text-to-unit checkpoint (default: ckpt/t2ut.bin).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Bleu,
    Uer,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Dev,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Hypotheses, one sentence per line.
    #[arg(long, requires = "reference", conflicts_with = "checkpoint")]
    pub hyp: Option<PathBuf>,
    /// References, one sentence per line.
    #[arg(long = "ref", requires = "hyp")]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bleu")]
    pub metric: MetricArg,
    /// Unit-to-text checkpoint to decode with `eval_decode`.
    #[arg(long, required_unless_present = "hyp")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Where to write decoded hypotheses.
    #[arg(long, requires = "checkpoint")]
    pub hyp_out: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::Io => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = commands::Context::new(&cli.global).and_then(|ctx| match cli.command {
        Command::GenWorld => commands::gen_world(&ctx),
        Command::ExtractUnits => commands::extract_units(&ctx),
        Command::LearnVocab => commands::learn_vocab(&ctx),
        Command::TrainU2tt(a) => commands::train_u2tt(&ctx, &a),
        Command::TrainT2ut => commands::train_t2ut(&ctx),
        Command::GenerateBt(a) => commands::generate_bt(&ctx, &a),
        Command::DubRun => commands::dub_run(&ctx),
        Command::Evaluate(a) => commands::evaluate(&ctx, &a),
        Command::Report => commands::report(&ctx),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
