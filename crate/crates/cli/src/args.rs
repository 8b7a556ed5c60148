use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use entroprune_core::ecl_detector::{Aggregate, DropKind};
use entroprune_core::flops_model::FlopsMode;
use entroprune_core::tensor_io::StateKind;
use entroprune_core::token_scorer::Budget;
use entroprune_core::Error;

#[derive(Debug, Parser)]
#[command(name = "entroprune", version, about = "Matrix-entropy profiling and visual-token pruning")]
pub struct Cli {
    /// Worker threads for parallel sections (results do not depend on it).
    #[arg(long, global = true, env = "ENTROPRUNE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Layer-wise entropy curve of a dump, as CSV.
    Profile(ProfileArgs),
    /// Locate the entropy collapse layer, as JSON.
    Detect(DetectArgs),
    /// Score tokens at the pruning layer and report the keep mask.
    Score(ScoreArgs),
    /// Like `score`, optionally writing the pruned tensors.
    Prune(PruneArgs),
    /// Analytic FLOPs and reduction ratio.
    Flops(FlopsArgs),
    /// Time the naive and small-side entropy paths.
    Bench(BenchArgs),
    /// Run the toy transformer with optional pruning.
    Simulate(SimulateArgs),
    /// Write a synthetic dump with a planted collapse layer.
    Synth(SynthArgs),
}

/// Layer selector: `auto` or a 1-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerArg {
    Auto,
    Index(usize),
}

impl FromStr for LayerArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(LayerArg::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(LayerArg::Index(k)),
            _ => Err(format!("expected `auto` or a layer index >= 1, got {s:?}")),
        }
    }
}

fn parse_with<T: FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// Activation-dump manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Which captured states to analyse.
    #[arg(long, default_value = "query", value_parser = parse_with::<StateKind>)]
    pub state: StateKind,
    /// Use only the k largest eigenvalues per layer entropy.
    #[arg(long)]
    pub topk: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectionArgs {
    /// Smallest drop accepted as a collapse.
    #[arg(long, default_value_t = 0.0)]
    pub min_drop: f64,
    #[arg(long, default_value = "absolute", value_parser = parse_with::<DropKind>)]
    pub drop_kind: DropKind,
    /// How per-sample entropies are combined per layer.
    #[arg(long, default_value = "mean", value_parser = parse_with::<Aggregate>)]
    pub aggregate: Aggregate,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub input: ManifestArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: ManifestArgs,
    #[command(flatten)]
    pub detection: DetectionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: ManifestArgs,
    #[command(flatten)]
    pub detection: DetectionArgs,
    /// Pruning layer: `auto` (detected) or an index.
    #[arg(long, default_value = "auto")]
    pub layer: LayerArg,
    /// Tokens to keep: a count like `192` or a share like `25%`.
    #[arg(long, value_parser = parse_with::<Budget>)]
    pub budget: Budget,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub score: ScoreArgs,
    /// Directory for the kept rows of each sample's pruning-layer query and key states.
    #[arg(long)]
    pub emit_pruned: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// Visual tokens before pruning.
    #[arg(long, default_value_t = 576)]
    pub tokens: u64,
    #[arg(long, default_value_t = 4096)]
    pub hidden: u64,
    #[arg(long, default_value_t = 32)]
    pub heads: u64,
    #[arg(long, default_value_t = 11008)]
    pub ffn: u64,
    #[arg(long, default_value_t = 32)]
    pub layers: u64,
    #[arg(long, default_value_t = 2)]
    pub prune_layer: u64,
    #[arg(long, default_value_t = 192)]
    pub keep: u64,
    #[arg(long, default_value = "simplified", value_parser = parse_with::<FlopsMode>)]
    pub mode: FlopsMode,
    /// Unpruned text tokens added to every layer (calibration only).
    #[arg(long, default_value_t = 0)]
    pub text_tokens: u64,
    /// Add the 5nmd norm/residual term in exact mode.
    #[arg(long)]
    pub include_norm_term: bool,
    /// Externally reported remaining-FLOPs percentage to compare against.
    #[arg(long)]
    pub anchor_remaining: Option<f64>,
    /// Largest text-token count tried when closing the gap to the anchor.
    #[arg(long, default_value_t = 300)]
    pub max_text_tokens: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 128)]
    pub head_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub heads: usize,
    /// Random token matrices per iteration.
    #[arg(long, default_value_t = 500)]
    pub tokens: usize,
    #[arg(long, default_value_t = 3)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// FFN width; defaults to ceil(8·hidden/3).
    #[arg(long)]
    pub ffn: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub tokens: usize,
    /// Weight seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the random input embeddings.
    #[arg(long, default_value_t = 1)]
    pub input_seed: u64,
    /// Pruning layer; no pruning when omitted.
    #[arg(long, requires = "budget")]
    pub prune_layer: Option<LayerArg>,
    #[arg(long, value_parser = parse_with::<Budget>, requires = "prune_layer")]
    pub budget: Option<Budget>,
    /// Dump whose query states are injected into calibration runs for `--prune-layer auto`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[command(flatten)]
    pub detection: DetectionArgs,
    /// Directory for captured per-layer tensors and final states as NPY.
    #[arg(long)]
    pub emit_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub tokens: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 3)]
    pub collapse_layer: usize,
    #[arg(long, default_value_t = 24)]
    pub rank_hi: usize,
    #[arg(long, default_value_t = 4)]
    pub rank_lo: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory; receives `manifest.json` and the NPY files.
    #[arg(long)]
    pub out: PathBuf,
}
