use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "unfilter", version, about = "Remove Instagram-style filters from photos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a paired dataset: every source image plus its 16 filtered variants.
    Synth(SynthArgs),
    /// Train the unfiltering network.
    Train(TrainArgs),
    /// Unfilter an image or a directory of images.
    Unfilter(UnfilterArgs),
    /// Score a checkpoint on a synthesized dataset.
    Eval(EvalArgs),
    /// Dominant colors of an image, optionally matched against a reference.
    Palette(PaletteArgs),
    /// Comparison strip: filtered | original | unfiltered per row.
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of source photos.
    pub src: PathBuf,
    /// Output dataset directory.
    pub out: PathBuf,
    /// Output height and width.
    #[arg(long, num_args = 2, value_names = ["H", "W"], default_values_t = [256, 256])]
    pub size: Vec<usize>,
    #[arg(long, default_value_t = 0, env = "UNFILTER_SEED")]
    pub seed: u64,
    /// Comma-separated subset of filters (default: all sixteen).
    #[arg(long, value_delimiter = ',')]
    pub filters: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the number of steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Continue from a training checkpoint.
    #[arg(long, conflicts_with = "config")]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print a progress line every N steps.
    #[arg(long, default_value_t = 50)]
    pub log_every: u64,
}

#[derive(Debug, Args)]
pub struct UnfilterArgs {
    pub ckpt: PathBuf,
    /// Image file or directory.
    pub input: PathBuf,
    /// Output file (for a file input) or directory.
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub ckpt: PathBuf,
    pub dataset: PathBuf,
    /// Where to write the JSON report.
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub filters: Option<Vec<String>>,
    #[arg(long)]
    pub max_images: Option<usize>,
    /// Skip classifying the originals.
    #[arg(long)]
    pub no_originals: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpaceArg {
    Lab,
    Rgb,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MatchingArg {
    Optimal,
    WeightOrder,
}

#[derive(Debug, Args)]
pub struct PaletteArgs {
    pub image: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Reference image; adds each color's ΔE to its matched reference color.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0, env = "UNFILTER_SEED")]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SpaceArg::Lab)]
    pub space: SpaceArg,
    #[arg(long, value_enum, default_value_t = MatchingArg::Optimal)]
    pub matching: MatchingArg,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    pub ckpt: PathBuf,
    /// Filtered images, one row each.
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Originals in the same order; looked up in `<dataset>/original/` when omitted.
    #[arg(long = "original")]
    pub originals: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
