use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "armsflow", version, about = "Event-by-event optical flow with multi-scale aperture correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene with a ground-truth sidecar.
    Synth(SynthArgs),
    /// Compute per-event flow records.
    Flow(FlowArgs),
    /// Extrapolate events along their flow.
    Predict(PredictArgs),
    /// Average endpoint error of flow records against ground truth.
    EvalAee(EvalAeeArgs),
    /// Affine fit of predicted against observed event clouds.
    EvalAffine(EvalAffineArgs),
    /// Direction histogram of flow records.
    Hist(HistArgs),
    /// Render flow records in a time window to a PPM image.
    Render(RenderArgs),
    /// Measure pipeline throughput.
    Bench(BenchArgs),
}

/// Pipeline parameters; flags override values from `--config`.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML config file; missing keys take the default parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub filter_radius: Option<u32>,
    #[arg(long)]
    pub inlier_fraction: Option<f64>,
    #[arg(long)]
    pub min_fit_events: Option<usize>,
    #[arg(long)]
    pub refit_passes: Option<usize>,
    /// Fitting neighborhood age limit (µs).
    #[arg(long)]
    pub t_past: Option<u64>,
    #[arg(long)]
    pub inlier_threshold_scale: Option<f64>,
    /// Pooling radii, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<u32>>,
    /// Pooling age limit (µs).
    #[arg(long)]
    pub scale_t_past: Option<u64>,
    #[arg(long)]
    pub min_pool_count: Option<usize>,
    #[arg(long)]
    pub tie_tolerance: Option<f64>,
    /// Prediction horizons in µs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<u64>>,
    /// Cluster window span (µs).
    #[arg(long)]
    pub cluster_span: Option<u64>,
    #[arg(long, value_enum)]
    pub polarity_mode: Option<PolarityArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PolarityArg {
    Separate,
    Merged,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default)]
pub enum ModeArg {
    #[default]
    Arms,
    Edl,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum FormatArg {
    Csv,
    Bin,
}

/// Event input; `--width/--height` give the sensor size for CSV input.
#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Event file (CSV or EVT1 binary); falls back to `input` in the config.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Input format; inferred from the extension by default.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 304)]
    pub width: u16,
    #[arg(long, default_value_t = 240)]
    pub height: u16,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum SceneArg {
    BarSquare,
    TwoSquares,
    Occlusion,
    Bar,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "bar-square")]
    pub scene: SceneArg,
    /// Object speed (px/s).
    #[arg(long, default_value_t = 100.0)]
    pub speed: f64,
    /// Bar orientation in degrees for `--scene bar`.
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub duration_us: u64,
    /// Background noise rate (events per pixel per second).
    #[arg(long, default_value_t = 0.0)]
    pub noise_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Event output; `.bin`/`.evt` selects the binary format.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Ground-truth CSV sidecar.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_enum, default_value = "arms")]
    pub mode: ModeArg,
    /// Flow record CSV; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write predicted events for the configured horizons.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_enum, default_value = "arms")]
    pub mode: ModeArg,
    /// Predicted event CSV; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalAeeArgs {
    /// Flow record CSV.
    #[arg(long)]
    pub flow: PathBuf,
    /// Ground-truth CSV with one row per flow record.
    #[arg(long)]
    pub truth: PathBuf,
    /// Restrict to one object id.
    #[arg(long)]
    pub object: Option<u32>,
}

#[derive(Args, Debug)]
pub struct EvalAffineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_enum, default_value = "arms")]
    pub mode: ModeArg,
    /// Ground-truth CSV used to select `--object`.
    #[arg(long, requires = "object")]
    pub truth: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    pub object: Option<u32>,
    /// Rescale each cluster to its median speed before predicting.
    #[arg(long)]
    pub normalize: bool,
    /// Per-window CSV output; a summary is printed to stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct HistArgs {
    /// Flow record CSV.
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long, default_value_t = 72)]
    pub bins: usize,
    /// Histogram CSV; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Flow record CSV.
    #[arg(long)]
    pub flow: PathBuf,
    /// Window start (µs, inclusive).
    #[arg(long, default_value_t = 0)]
    pub start: u64,
    /// Window end (µs, exclusive).
    #[arg(long, default_value_t = u64::MAX)]
    pub end: u64,
    /// Speed mapped to full brightness (px/s).
    #[arg(long, default_value_t = 200.0)]
    pub max_speed: f64,
    #[arg(long, default_value_t = 304)]
    pub width: u16,
    #[arg(long, default_value_t = 240)]
    pub height: u16,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Event file to benchmark; a tiled synthetic stream is used when absent.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 304)]
    pub width: u16,
    #[arg(long, default_value_t = 240)]
    pub height: u16,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_enum, default_value = "arms")]
    pub mode: ModeArg,
    /// Synthetic stream length.
    #[arg(long, default_value_t = 1_000_000)]
    pub events: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Flow(a) => commands::flow(a),
        Command::Predict(a) => commands::predict(a),
        Command::EvalAee(a) => commands::eval_aee(a),
        Command::EvalAffine(a) => commands::eval_affine(a),
        Command::Hist(a) => commands::hist(a),
        Command::Render(a) => commands::render(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
