//! `sgmm`: fixation points in, compact Gaussian-mixture saliency out.
//!
//! One verb per pipeline stage, composable through files: `synth`
//! generates a seeded toy dataset, `fit` runs EM on points, `render`
//! expands a mixture to a dense map, `blur` builds ground truth from
//! points, `direct-fit` / `train-toy` / `predict` cover the
//! gradient-descent path, `evaluate` scores predictions, `subsample`
//! thins point sets. Commands that take a directory process every
//! matching file concurrently; every random choice follows `--seed`.
//!
//! Exit codes: 0 success, 2 bad data or arguments, 3 file trouble,
//! 4 numerical divergence. Set `SGMM_LOG=debug` for progress chatter.

mod cmds;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgmm_core::io::MapFormat;
use sgmm_core::render::DEFAULT_THRESHOLD_GT;
use sgmm_core::{AnchorLayout, CovarianceMode, ErrorKind};

#[derive(Parser)]
#[command(name = "sgmm", version, about = "Gaussian-mixture saliency pipeline")]
struct Cli {
    /// Seed for every random choice this invocation makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for batch commands (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file, or output directory for batch inputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fixation dataset into --out.
    ///
    /// Writes <id>.points.csv, <id>.gt.raw and <id>.truth.toml per image.
    Synth(SynthArgs),
    /// Fit a mixture to fixation points by EM.
    Fit(FitArgs),
    /// Render a mixture file to a dense map.
    Render(RenderArgs),
    /// Blur fixation points into a ground-truth map.
    Blur(BlurArgs),
    /// Gradient-descent fit of free parameters to one target map.
    DirectFit(DirectFitArgs),
    /// Train the tiny predictor on a directory of maps (identity task).
    TrainToy(TrainToyArgs),
    /// Run a trained predictor on a feature map, producing a mixture.
    Predict(PredictArgs),
    /// Score predictions against ground truth and/or fixations (JSONL).
    Evaluate(EvalArgs),
    /// Keep a random fraction of a point set.
    Subsample(SubsampleArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of images.
    #[arg(long, default_value_t = 50)]
    images: u32,
    /// Canvas as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_wh, default_value = "640x480")]
    canvas: (u32, u32),
    /// Inclusive cluster-count range, MIN:MAX.
    #[arg(long, value_parser = parse_range_u32, default_value = "1:5")]
    modes: (u32, u32),
    /// Fixation points per image.
    #[arg(long, default_value_t = 460)]
    points: u32,
    /// Inclusive per-axis cluster variance range in px², MIN:MAX.
    #[arg(long, value_parser = parse_range_f64, default_value = "1600:3600")]
    var_range: (f64, f64),
}

#[derive(Args)]
struct FitArgs {
    /// Points file, or a directory of *.points.csv.
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    components: usize,
    #[arg(long, value_enum, default_value_t = CovArg::Diag)]
    cov: CovArg,
}

#[derive(Args)]
struct RenderArgs {
    /// Mixture file, or a directory of *.toml.
    input: PathBuf,
    /// Selection threshold G_t: components with weight ≤ G_t/C are dropped.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_GT)]
    gt_threshold: f64,
    /// Smooth the output as if blurred with this σ in pixels (0 = off).
    ///
    /// Use the ground truth's blur σ when comparing against maps built by
    /// blurring fixation points: a mixture fitted to the raw points then
    /// needs the same bandwidth on top. Exact, via covariance inflation.
    #[arg(long, default_value_t = 0.0)]
    blur: f64,
    /// Output format; defaults to the --out extension (.pgm → pgm).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct BlurArgs {
    /// Points file.
    input: PathBuf,
    /// Gaussian blur std in pixels.
    #[arg(long, default_value_t = sgmm_core::io::GT_BLUR_SIGMA)]
    sigma: f64,
}

#[derive(Args)]
struct DirectFitArgs {
    /// Target map.
    input: PathBuf,
    #[arg(long, value_parser = parse_wh, default_value = "2x2")]
    grid: (u32, u32),
    #[arg(long, value_enum, default_value_t = LayoutArg::Square)]
    layout: LayoutArg,
    #[arg(long, value_enum, default_value_t = CovArg::Diag)]
    cov: CovArg,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    steps: u32,
    /// Optional file for the per-step loss trace, one value per line.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct TrainToyArgs {
    /// Directory of *.gt.raw maps; each trains as its own feature image.
    data: PathBuf,
    #[arg(long, value_parser = parse_wh, default_value = "2x2")]
    grid: (u32, u32),
    #[arg(long, value_enum, default_value_t = LayoutArg::Square)]
    layout: LayoutArg,
    #[arg(long, value_enum, default_value_t = CovArg::Diag)]
    cov: CovArg,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: u32,
    #[arg(long, default_value_t = 4)]
    batch: u32,
}

#[derive(Args)]
struct PredictArgs {
    /// Feature map.
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = parse_wh, default_value = "2x2")]
    grid: (u32, u32),
    #[arg(long, value_enum, default_value_t = LayoutArg::Square)]
    layout: LayoutArg,
    #[arg(long, value_enum, default_value_t = CovArg::Diag)]
    cov: CovArg,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction map, or a directory of *.pred.raw.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth map, or a directory of *.gt.raw.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Fixations for NSS/AUC/IG, file or directory of *.points.csv.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Negative fixations (other images' points) for sauc.
    #[arg(long)]
    negatives: Option<PathBuf>,
    /// Comma-separated list; default cc,sim,kl.
    #[arg(long, value_enum, value_delimiter = ',')]
    metrics: Option<Vec<MetricArg>>,
}

#[derive(Args)]
struct SubsampleArgs {
    /// Points file.
    input: PathBuf,
    /// Fraction of points to keep, in (0, 1].
    #[arg(long)]
    ratio: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CovArg {
    Spherical,
    Diag,
    Full,
}

impl From<CovArg> for CovarianceMode {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Spherical => CovarianceMode::Spherical,
            CovArg::Diag => CovarianceMode::Diagonal,
            CovArg::Full => CovarianceMode::Full,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LayoutArg {
    Square,
    Horizontal,
    Vertical,
    None,
}

impl From<LayoutArg> for AnchorLayout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Square => AnchorLayout::Square,
            LayoutArg::Horizontal => AnchorLayout::HorizontalOnly,
            LayoutArg::Vertical => AnchorLayout::VerticalOnly,
            LayoutArg::None => AnchorLayout::None,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    F64raw,
    Pgm,
}

impl From<FormatArg> for MapFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::F64raw => MapFormat::F64Raw,
            FormatArg::Pgm => MapFormat::Pgm,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Cc,
    Sim,
    Kl,
    Emd,
    Nss,
    AucJudd,
    AucBorji,
    Sauc,
    Ig,
}

impl MetricArg {
    fn name(self) -> &'static str {
        match self {
            MetricArg::Cc => "cc",
            MetricArg::Sim => "sim",
            MetricArg::Kl => "kl",
            MetricArg::Emd => "emd",
            MetricArg::Nss => "nss",
            MetricArg::AucJudd => "auc-judd",
            MetricArg::AucBorji => "auc-borji",
            MetricArg::Sauc => "sauc",
            MetricArg::Ig => "ig",
        }
    }

    fn needs_gt(self) -> bool {
        matches!(self, MetricArg::Cc | MetricArg::Sim | MetricArg::Kl | MetricArg::Emd)
    }

    fn needs_points(self) -> bool {
        !self.needs_gt()
    }
}

fn parse_wh(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w = a.parse().map_err(|e| format!("width: {e}"))?;
    let h = b.parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((w, h))
}

fn parse_range_u32(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let lo = a.parse().map_err(|e| format!("min: {e}"))?;
    let hi = b.parse().map_err(|e| format!("max: {e}"))?;
    if lo > hi {
        return Err("range must be well-ordered".into());
    }
    Ok((lo, hi))
}

fn parse_range_f64(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let lo: f64 = a.parse().map_err(|e| format!("min: {e}"))?;
    let hi: f64 = b.parse().map_err(|e| format!("max: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err("range must be finite and well-ordered".into());
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("SGMM_LOG", "warn"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Io => 3,
                ErrorKind::Divergence => 4,
            })
        }
    }
}

fn run(cli: Cli) -> sgmm_core::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| sgmm_core::SgmmError::DegenerateInput(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth(a) => cmds::synth(a, cli.seed, &cli.out),
        Command::Fit(a) => cmds::fit(a, cli.seed, &cli.out),
        Command::Render(a) => cmds::render(a, &cli.out),
        Command::Blur(a) => cmds::blur(a, &cli.out),
        Command::DirectFit(a) => cmds::direct_fit(a, cli.seed, &cli.out),
        Command::TrainToy(a) => cmds::train_toy(a, cli.seed, &cli.out),
        Command::Predict(a) => cmds::predict(a, &cli.out),
        Command::Evaluate(a) => cmds::evaluate(a, cli.seed, &cli.out),
        Command::Subsample(a) => cmds::subsample(a, cli.seed, &cli.out),
    }
}
