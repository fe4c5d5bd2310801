//! `melclean`: synthesize training pairs, train, enhance, stream, evaluate
//! and draw spectrograms.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use melclean_core::model::Target;
use melclean_core::Error;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;
pub const EXIT_CHECKPOINT: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "melclean", version, about = "Mel-spectrogram speech enhancement")]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed (falls back to the config file, then MELCLEAN_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a procedural speech/RIR/noise corpus and its manifest.
    DemoCorpus(DemoCorpusArgs),
    /// Synthesize noisy/clean pairs from a corpus manifest.
    Synth(SynthArgs),
    /// Train a model on pairs synthesized on the fly.
    Train(TrainArgs),
    /// Enhance whole files (offline or online model).
    Enhance(EnhanceArgs),
    /// Enhance a file chunk by chunk with an online model.
    Stream(StreamArgs),
    /// Score estimates against references (CSV on stdout or --out).
    Eval(EvalArgs),
    /// Draw the logMel spectrogram of a WAV file as a grayscale PNG.
    Spectrogram(SpectrogramArgs),
}

#[derive(Args, Debug)]
pub struct DemoCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub n_speech: usize,
    #[arg(long, default_value_t = 12)]
    pub n_rir: usize,
    #[arg(long, default_value_t = 12)]
    pub n_noise: usize,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of pairs.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Crop utterances to this many milliseconds.
    #[arg(long)]
    pub clip_ms: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for checkpoints and the training log.
    #[arg(long)]
    pub out: PathBuf,
    /// Model preset: toy-online, toy-offline, online-s, offline-s, offline-l.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    /// Training pairs.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Held-out validation pairs.
    #[arg(long, default_value_t = 16)]
    pub n_val: usize,
    #[arg(long)]
    pub clip_ms: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Expected target of the checkpoint; a different one is a mismatch.
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    #[arg(long, value_enum, default_value_t = PhaseArg::Noisy)]
    pub phase: PhaseArg,
    #[arg(long, default_value_t = melclean_core::reconstruct::DEFAULT_GL_ITERS)]
    pub gl_iters: usize,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[command(flatten)]
    pub io: InferArgs,
}

#[derive(Args, Debug)]
pub struct StreamArgs {
    #[command(flatten)]
    pub io: InferArgs,
    /// Chunk length fed to the session.
    #[arg(long, default_value_t = 20.0)]
    pub chunk_ms: f64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Reference WAV, or a directory of them.
    #[arg(long)]
    pub reference: PathBuf,
    /// Estimate WAV, or a directory matched to the references by id (the
    /// file name up to its first dot).
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct SpectrogramArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Clip value of the logarithm; the gray scale spans [ln eps, max].
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TargetArg {
    Mapping,
    Mask,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Mapping => Target::Mapping,
            TargetArg::Mask => Target::Mask,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PhaseArg {
    Noisy,
    Gl,
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NotFound(_) | Error::Io(_) | Error::Wav(_) | Error::AudioFormat(_)) => EXIT_IO,
        Some(Error::Config(_)) => EXIT_CONFIG,
        Some(Error::CheckpointMismatch(_)) => EXIT_CHECKPOINT,
        Some(_) => EXIT_OTHER,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
