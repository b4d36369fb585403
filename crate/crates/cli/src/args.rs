use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tuckerforge", version, about = "Tucker compression of 3-D convolution kernels")]
pub struct Cli {
    /// Worker threads (falls back to TUCKERFORGE_THREADS, then all cores;
    /// `bench` defaults to 1).
    #[arg(long, global = true, env = "TUCKERFORGE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose every eligible layer of a weight container.
    Compress(CompressArgs),
    /// Parameter and FLOP accounting for an architecture.
    Analyze(AnalyzeArgs),
    /// Compare factorized against direct execution on seeded random inputs.
    Verify(VerifyArgs),
    /// Explained variance over a grid of channel ranks for one layer.
    EvGrid(EvGridArgs),
    /// Zero the lowest-norm output channels of eligible layers.
    Prune(PruneArgs),
    /// Time direct against factorized forward passes.
    Bench(BenchArgs),
    /// Write a container with seeded random weights for an architecture.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct EligibilityArgs {
    /// Also decompose 1×1×1 kernels.
    #[arg(long)]
    pub include_pointwise: bool,
    /// Also decompose transposed convolutions (EV and accounting only).
    #[arg(long)]
    pub include_transposed: bool,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct RankArgs {
    /// Downsampling factor in (0, 1]; ranks are round(df · channels).
    #[arg(long, default_value_t = 0.5)]
    pub df: f64,
    /// Lower clamp on each rank.
    #[arg(long, default_value_t = 8)]
    pub min_rank: usize,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub ranks: RankArgs,
    /// Refine the HOSVD factors with HOOI.
    #[arg(long)]
    pub hooi: bool,
    #[arg(long, default_value_t = 20)]
    pub hooi_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub hooi_tol: f64,
    #[command(flatten)]
    pub eligibility: EligibilityArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Architecture JSON or weight container; omit with --unet-like.
    #[arg(required_unless_present = "unet_like", conflicts_with = "unet_like")]
    pub input: Option<PathBuf>,
    /// Use the bundled synthetic U-Net-like architecture.
    #[arg(long)]
    pub unet_like: bool,
    /// One or more downsampling factors, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub df: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub min_rank: usize,
    /// Count a multiply and an add per MAC.
    #[arg(long)]
    pub flops_double: bool,
    #[command(flatten)]
    pub eligibility: EligibilityArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub original: PathBuf,
    pub compressed: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest spatial extent of the random verification inputs.
    #[arg(long, default_value_t = 16)]
    pub extent: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvGridArgs {
    pub input: PathBuf,
    /// Layer to analyze.
    #[arg(long)]
    pub layer: String,
    /// Output-channel ranks (default: every rank).
    #[arg(long, value_delimiter = ',')]
    pub grid_to: Vec<usize>,
    /// Input-channel ranks (default: every rank).
    #[arg(long, value_delimiter = ',')]
    pub grid_ti: Vec<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Fraction of output channels to zero in each layer.
    #[arg(long)]
    pub fraction: f64,
    #[command(flatten)]
    pub eligibility: EligibilityArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Weight container to benchmark; without it a single synthetic layer is
    /// timed.
    pub model: Option<PathBuf>,
    /// Channels of the synthetic layer.
    #[arg(long, default_value_t = 256)]
    pub channels: usize,
    /// Kernel extent of the synthetic layer.
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// Spatial extent of the inputs (model layers are clipped to it).
    #[arg(long, default_value_t = 32)]
    pub extent: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
    pub df: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub min_rank: usize,
    #[arg(long, default_value_t = tuckerforge::harness::DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = tuckerforge::harness::DEFAULT_WARMUP)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Architecture JSON or container; defaults to the bundled U-Net-like one.
    pub arch: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Store weights as f64 instead of f32.
    #[arg(long)]
    pub f64: bool,
}
