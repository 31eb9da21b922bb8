use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use pbim_core::filterbank::S1Mode;
use pbim_core::learneval::PrecisionDenominator;
use pbim_core::SelectorKind;

mod commands;
mod table;

/// Biologically inspired image features with keypoint-driven patch selection.
#[derive(Parser, Debug)]
#[command(name = "pbim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select C1 patches from training images and write a dictionary file.
    BuildDictionary(BuildArgs),
    /// Compute C2 features of every image in a directory as CSV.
    Extract(ExtractArgs),
    /// Train a linear SVM on positive and negative feature tables.
    Train(TrainArgs),
    /// Score feature tables with a trained model and report metrics and ROC.
    Evaluate(EvaluateArgs),
    /// Run a multi-trial experiment described by a JSON config.
    Experiment(ExperimentArgs),
    /// Write the saliency map (and optionally the salient mask) of one image.
    Saliency(SaliencyArgs),
    /// Generate a two-class synthetic dataset.
    GenerateSynthetic(SynthArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Directory of training images
    #[arg(long)]
    pub train_dir: PathBuf,
    /// Output dictionary path
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline config JSON; command-line flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Patch selector: psghm (keypoints in salient regions) or random
    #[arg(long, default_value_t = SelectorKind::Psghm)]
    pub selector: SelectorKind,
    /// Total number of patches
    #[arg(long, default_value_t = 1500)]
    pub budget: usize,
    /// Patch sides in C1 cells
    #[arg(long, value_delimiter = ',', default_value = "4,8,12,16")]
    pub sizes: Vec<usize>,
    /// Most keypoint patches per training image
    #[arg(long, default_value_t = 128)]
    pub per_image_cap: usize,
    /// Seed for random draws and fallbacks
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// S1 filters used for C1
    #[arg(long, default_value_t = S1Mode::Oghm)]
    pub s1_mode: S1Mode,
    /// FAST threshold on min-max normalized layers
    #[arg(long, default_value_t = 0.05)]
    pub fast_threshold: f64,
    /// Salient if saliency exceeds this multiple of the mean
    #[arg(long, default_value_t = 2.0)]
    pub saliency_multiplier: f64,
    /// Downscale images whose larger side exceeds this
    #[arg(long)]
    pub max_side: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub dictionary: PathBuf,
    #[arg(long)]
    pub image_dir: PathBuf,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
    /// Downscale images whose larger side exceeds this
    #[arg(long)]
    pub max_side: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dictionary the feature tables were extracted with
    #[arg(long)]
    pub dictionary: PathBuf,
    /// Feature CSV of positive examples
    #[arg(long)]
    pub positive: PathBuf,
    /// Feature CSV of negative examples
    #[arg(long)]
    pub negative: PathBuf,
    /// Output model JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Regularization trade-off
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    /// Seed for example sampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dictionary the feature tables were extracted with
    #[arg(long)]
    pub dictionary: PathBuf,
    #[arg(long)]
    pub positive: PathBuf,
    #[arg(long)]
    pub negative: PathBuf,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Denominator of 1 - precision
    #[arg(long, value_enum, default_value_t = Denominator::Predicted)]
    pub precision_denominator: Denominator,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum Denominator {
    /// tp + fp
    Predicted,
    /// tp + fn
    Actual,
}

impl From<Denominator> for PrecisionDenominator {
    fn from(d: Denominator) -> Self {
        match d {
            Denominator::Predicted => PrecisionDenominator::PredictedPositives,
            Denominator::Actual => PrecisionDenominator::ActualPositives,
        }
    }
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment config JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Output report JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a class,k,mean,std table
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Output PGM, min-max scaled to 0..255
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the salient mask as PBM
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub multiplier: f64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Dataset root to create
    #[arg(long)]
    pub out: PathBuf,
    /// Name of the positive class directory
    #[arg(long, default_value = "glyph")]
    pub class: String,
    #[arg(long, default_value_t = 80)]
    pub positives: usize,
    #[arg(long, default_value_t = 80)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Which flags of a subcommand were typed explicitly.
pub struct Explicit(Vec<String>);

impl Explicit {
    pub fn has(&self, id: &str) -> bool {
        self.0.iter().any(|s| s == id)
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<pbim_core::Error>())
        .map(pbim_core::Error::kind)
        .unwrap_or("runtime")
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("PBIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("PBIM_THREADS must be a non-negative integer, got `{raw}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: usage: {msg}");
        return ExitCode::from(2);
    }
    let explicit = matches
        .subcommand()
        .map(|(_, sub)| {
            Explicit(
                sub.ids()
                    .filter(|id| sub.value_source(id.as_str()) == Some(ValueSource::CommandLine))
                    .map(|id| id.to_string())
                    .collect(),
            )
        })
        .unwrap_or(Explicit(Vec::new()));

    let result = match &cli.command {
        Command::BuildDictionary(a) => commands::build_dictionary(a, &explicit),
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Saliency(a) => commands::saliency(a),
        Command::GenerateSynthetic(a) => commands::generate_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error: {}: {msg}", error_kind(&err));
            ExitCode::from(1)
        }
    }
}
