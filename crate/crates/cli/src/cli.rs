use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use knoblab::AttributeVector;

use crate::parse;

/// Manifest file name inside a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.json";
const DEFAULT_MASTER_SEED: &str = "7";

#[derive(Debug, Parser)]
#[command(name = "knoblab", version, about = "Counterfactual attribution over material attributes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the lot world and a labelled tile manifest.
    SynthData(SynthDataArgs),
    /// Train the stress regressor on a manifest.
    Train(TrainArgs),
    /// Predict stress for one tile.
    Predict(PredictArgs),
    /// Render one tile to PGM or PNG (chosen by extension).
    Render(RenderArgs),
    /// Vary one attribute over a grid and record predictions.
    Sweep(SweepArgs),
    /// Search attribute changes that move the prediction to a target.
    Counterfactual(CounterfactualArgs),
    /// Finite-difference check of every primitive and of the objective.
    Gradcheck(GradcheckArgs),
    /// Serve render, predict, sweep and counterfactual over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TileArgs {
    /// Layout seed of the tile.
    #[arg(long)]
    pub seed: u64,
    /// size,porosity,dispersity,facetness, each in [0, 1].
    #[arg(long, value_parser = parse::attrs)]
    pub attrs: AttributeVector,
}

#[derive(Debug, Args)]
pub struct SynthDataArgs {
    #[arg(long, default_value_t = 30)]
    pub lots: usize,
    #[arg(long, default_value_t = 200)]
    pub tiles: usize,
    /// Master seed; KNOBLAB_SEED overrides the default.
    #[arg(long, env = "KNOBLAB_SEED", default_value = DEFAULT_MASTER_SEED)]
    pub seed: u64,
    /// Per-tile attribute jitter, at most 0.05.
    #[arg(long, default_value_t = 0.02)]
    pub jitter: f64,
    /// Label noise standard deviation in stress units.
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    /// Output directory; the manifest is written to DIR/manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by synth-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerChoice::Adam)]
    pub optimizer: OptimizerChoice,
    /// Tile resolution: 32, 64 or 128.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Seed for weight initialization and batch order.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the training summary JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub tile: TileArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub tile: TileArgs,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Output image, .pgm or .png.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub tile: TileArgs,
    /// Attribute index: 0 size, 1 porosity, 2 dispersity, 3 facetness.
    #[arg(long)]
    pub index: usize,
    /// start:stop:count
    #[arg(long, value_parser = parse::grid, default_value = "0.1:0.9:9")]
    pub grid: parse::GridSpec,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormChoice {
    #[value(name = "1")]
    L1,
    #[value(name = "2")]
    L2,
}

#[derive(Debug, Args)]
pub struct CounterfactualArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub tile: TileArgs,
    /// Target stress.
    #[arg(long, allow_negative_numbers = true)]
    pub target: f64,
    /// Weight of the prediction term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Image distance norm order.
    #[arg(long, value_enum, default_value_t = NormChoice::L2)]
    pub norm: NormChoice,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tolerance: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check the objective through this model; an untrained 32x32 model otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Random cases per primitive kind and for the objective.
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    #[arg(long, env = "KNOBLAB_SEED", default_value = DEFAULT_MASTER_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Checkpoint to serve; /predict, /sweep and /counterfactual answer 409 without one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset directory; /lots answers 409 without one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}
