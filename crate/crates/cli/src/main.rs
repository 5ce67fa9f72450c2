//! `pure`: purify polysemantic neurons into virtual neurons from the
//! command line.
//!
//! Exit codes: 0 on success, 2 on usage, I/O or validation errors, 3 on
//! numerical failures (non-finite values, degenerate LRP denominators,
//! k-means without enough distinct rows).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "pure", version, about = "Split polysemantic neurons into virtual neurons by clustering circuit attributions")]
struct Cli {
    /// `key = value` file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for per-sample stages (results do not depend on it).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster a neuron's reference attributions into virtual neurons.
    Purify(PurifyArgs),
    /// Route one sample to its nearest virtual neuron; prints JSON.
    Assign(AssignArgs),
    /// Separability, purity and distance correlation of embeddings.
    Evaluate(EvaluateArgs),
    /// Attribution vs activation clustering on planted-circuit networks.
    Bench(BenchArgs),
    /// Crop (and mask) an image to a neuron's relevant region.
    Crop(CropArgs),
    /// Print a network summary.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    /// Gradient x Activation.
    Gradact,
    /// Epsilon-LRP (see --epsilon).
    Lrp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReductionArg {
    /// Spatial maximum for feature maps, the unit itself for vectors.
    Auto,
    Scalar,
    SpatialMax,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AggregationArg {
    /// One entry per channel for feature maps.
    ChannelSum,
    /// One entry per element.
    Flatten,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    /// K=5, T=0.01, no mask.
    Eval,
    /// K=51, T=0.01, mask with alpha 0.4.
    Plot,
}

#[derive(Args, Debug)]
struct TargetArgs {
    /// Network manifest (JSON).
    #[arg(long, value_name = "FILE")]
    network: PathBuf,
    /// Layer of the neuron to analyse.
    #[arg(long)]
    layer: String,
    /// Unit index (channel index for feature maps).
    #[arg(long)]
    neuron: usize,
    #[arg(long, value_enum, default_value = "auto")]
    reduction: ReductionArg,
}

#[derive(Args, Debug)]
struct MethodArgs {
    /// Attribution method.
    #[arg(long, value_enum, default_value = "gradact")]
    method: MethodArg,
    /// LRP stabilizer, used with --method lrp.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
}

#[derive(Args, Debug)]
struct PurifyArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Dataset directory (with samples.tsv) or stacked .nt file.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Number of most-activating reference samples.
    #[arg(long, default_value_t = 100)]
    n_ref: usize,
    /// Number of virtual neurons.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[command(flatten)]
    method: MethodArgs,
    /// Layer to attribute to; defaults to the nearest preceding nonlinearity.
    #[arg(long)]
    at_layer: Option<String>,
    #[arg(long, value_enum, default_value = "channel-sum")]
    aggregation: AggregationArg,
    /// k-means seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Scale attribution rows to unit L2 norm before clustering.
    #[arg(long)]
    row_norm: bool,
    /// Standardize each attribution dimension before clustering.
    #[arg(long)]
    standardize: bool,
    /// Cluster activations of the attribution layer instead (baseline).
    #[arg(long)]
    activation: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AssignArgs {
    /// circuit_model.json, or the directory holding it.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// .nt file: an attribution vector, or an input sample with --network.
    #[arg(long, value_name = "FILE")]
    sample: PathBuf,
    /// Network manifest; when given, the sample is attributed first.
    #[arg(long, value_name = "FILE")]
    network: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// `[n, d]` embedding matrix (.nt); ids from ids.tsv next to it.
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    /// Id list for --embeddings, one per line.
    #[arg(long, value_name = "FILE")]
    ids: Option<PathBuf>,
    /// `id<TAB>cluster` file; without it embeddings are clustered with k-means.
    #[arg(long, value_name = "FILE")]
    labels: Option<PathBuf>,
    /// Clusters when --labels is absent.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Seed for embedding clustering and correlation partitions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Second embedding set (same ids) for distance correlation.
    #[arg(long, value_name = "FILE")]
    compare: Option<PathBuf>,
    /// Use Spearman instead of Pearson correlation.
    #[arg(long)]
    spearman: bool,
    /// Partitions for the correlation standard error.
    #[arg(long, default_value_t = 30)]
    partitions: usize,
    /// `id<TAB>class` ground truth for purity.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Write `i,j,distance` rows (and the compared distance) to this CSV.
    #[arg(long, value_name = "FILE")]
    pairs_csv: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 2)]
    n_features: usize,
    /// Distractor features per sample.
    #[arg(long, default_value_t = 8)]
    distractors: usize,
    /// Distractor amplitudes are drawn from U[0, A].
    #[arg(long, default_value_t = 3.0)]
    distractor_amplitude: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Input dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Hidden detectors per feature.
    #[arg(long, default_value_t = 4)]
    detectors: usize,
    #[arg(long, default_value_t = 400)]
    n_samples: usize,
    #[arg(long, default_value_t = 100)]
    n_ref: usize,
    /// Clusters; defaults to --n-features.
    #[arg(long)]
    k: Option<usize>,
    /// Seeds run: seed-start .. seed-start + seeds.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_start: u64,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Also write the first seed's network, dataset, truth and embeddings here.
    #[arg(long, value_name = "DIR")]
    export: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CropArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Input image (.nt, [C, H, W] or [H, W] values in [0, 1]).
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    #[arg(long, value_enum, default_value = "eval")]
    preset: PresetArg,
    /// Override the preset's Gaussian kernel size (odd).
    #[arg(long)]
    kernel: Option<usize>,
    /// Override the preset's threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Normalize max(h, 0) instead of |h|.
    #[arg(long)]
    positive_part: bool,
    #[command(flatten)]
    method: MethodArgs,
    /// Output crop (.nt).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write an 8-bit PNG: each channel clamped to [0, 1] and scaled
    /// by 255; one channel gives grayscale, three give RGB.
    #[arg(long, value_name = "FILE")]
    png: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long, value_name = "FILE")]
    network: PathBuf,
}

fn run(cli: Cli) -> pure_core::Result<()> {
    match cli.command {
        Command::Purify(a) => commands::purify(a),
        Command::Assign(a) => commands::assign(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Crop(a) => commands::crop(a),
        Command::Inspect(a) => commands::inspect(a),
    }
}

fn main() -> ExitCode {
    let args = match config::merge(&Cli::command(), std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = match cli.jobs {
        Some(0) => {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => {
                eprintln!("error: cannot start {n} workers: {e}");
                return ExitCode::from(2);
            }
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
