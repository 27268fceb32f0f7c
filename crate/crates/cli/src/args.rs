use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "elastic-ast", version, about = "Variable-length audio spectrogram transformer toolkit")]
pub struct Cli {
    /// Floating-point precision of model computations.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,

    /// Seed for every random draw.
    #[arg(long, global = true, env = "ELASTIC_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// WAV file (or directory of WAV files) to SPEC1 log-mel spectrograms.
    Featurize(FeaturizeArgs),
    /// Pad and cut ratios of fixed-length and packed regimes.
    PackStats(PackStatsArgs),
    /// Logits for a directory of SPEC1 files.
    Forward(ForwardArgs),
    /// Finite-difference check of the analytic gradients (always 64-bit).
    GradCheck(GradCheckArgs),
    /// Train on a synthetic task and write a checkpoint.
    TrainToy(TrainArgs),
    /// Accuracy of a checkpoint across lengths or compression factors.
    Evaluate(EvaluateArgs),
    /// Throughput and informative-token fraction of packed vs fixed processing.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Input WAV file or directory.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output SPEC1 file, or directory when the input is a directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 25.0)]
    pub window_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    pub shift_ms: f64,
    #[arg(long, default_value_t = 128)]
    pub n_mels: usize,
    #[arg(long, conflicts_with = "compress_avgpool")]
    pub compress_fshift: Option<f64>,
    #[arg(long)]
    pub compress_avgpool: Option<usize>,
    /// Zero-pad frames to a multiple of this many patch columns; 0 disables padding.
    #[arg(long, default_value_t = 16)]
    pub pad_to_multiple: usize,
    #[arg(long, default_value_t = 16)]
    pub patch: usize,
}

#[derive(Debug, Args)]
pub struct PackStatsArgs {
    /// Token counts: `sample_id,token_count` manifest lines or one bare count per line.
    #[arg(long, required_unless_present = "synthetic")]
    pub lengths: Option<PathBuf>,
    /// Draw this many log-normal lengths instead of reading a file.
    #[arg(long, conflicts_with = "lengths")]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 400.0)]
    pub median: f64,
    #[arg(long, default_value_t = 0.6)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    /// Fixed-length regime token count; omitted means no fixed-length row.
    #[arg(long = "fixed-T")]
    pub fixed_t: Option<usize>,
    /// Packing batch sizes; omitted packs all lengths as one batch.
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Vec<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory of `.spec` files, processed in file-name order.
    #[arg(long)]
    pub specs: PathBuf,
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Model width, heads and layers.
    #[arg(long, value_delimiter = ',', default_values_t = [16, 2, 2])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Entries checked per tensor; all when omitted.
    #[arg(long)]
    pub max_per_tensor: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    LateSignal,
    Resolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Elastic,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompressArg {
    None,
    Fshift,
    Avgpool,
}

#[derive(Debug, Args)]
pub struct TaskOptions {
    #[arg(long, value_enum, default_value_t = TaskArg::LateSignal)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 1024.0)]
    pub median_frames: f64,
    #[arg(long, default_value_t = 0.15)]
    pub sigma: f64,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_eval: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub task: TaskOptions,
    #[arg(long, value_enum, default_value_t = ModeArg::Elastic)]
    pub mode: ModeArg,
    /// Baseline input length in frames; defaults to the task's full clip length.
    #[arg(long = "fixed-T")]
    pub fixed_t: Option<usize>,
    #[arg(long, value_enum, default_value_t = CompressArg::None)]
    pub compress: CompressArg,
    /// Compression set; defaults to every allowed factor of the chosen mode.
    #[arg(long, value_delimiter = ',')]
    pub factors: Vec<f64>,
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 12)]
    pub packing_batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Model width, heads and layers.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 4, 2])]
    pub dims: Vec<usize>,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluation lengths in frames.
    #[arg(long, value_delimiter = ',', conflicts_with = "compress")]
    pub lengths: Vec<usize>,
    /// Sweep compression factors of this kind instead of lengths.
    #[arg(long, value_enum)]
    pub compress: Option<CompressArg>,
    #[arg(long, value_delimiter = ',')]
    pub factors: Vec<f64>,
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 96)]
    pub samples: usize,
    #[arg(long, default_value_t = 256.0)]
    pub median: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 16)]
    pub min_tokens: usize,
    #[arg(long, default_value_t = 1024)]
    pub max_tokens: usize,
    /// Fixed-length regime tokens; defaults to the mean length.
    #[arg(long = "fixed-T")]
    pub fixed_t: Option<usize>,
    #[arg(long, default_value_t = 1024)]
    pub budget: usize,
    #[arg(long, default_value_t = 32)]
    pub packing_batch: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [64, 4, 2])]
    pub dims: Vec<usize>,
    /// Token-accounting CSV (deterministic); timings go to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
