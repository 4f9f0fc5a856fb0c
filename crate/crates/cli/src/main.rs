use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

/// Illuminant estimation with multivariate regression tree ensembles.
#[derive(Debug, Parser)]
#[command(name = "illumtree", version, about)]
struct Cli {
    /// TOML file overriding built-in defaults; explicit flags still win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute feature vectors for a directory of linear PNG/PPM images.
    Extract(ExtractArgs),
    /// Write a synthetic feature dataset.
    Synth(SynthArgs),
    /// Train an ensemble and save it as JSON.
    Train(TrainArgs),
    /// Predict illuminants for every row of a feature dataset.
    Predict(PredictArgs),
    /// Repeated k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Compare the median-based minimizer with the numeric optimum.
    ApproxError(ApproxArgs),
    /// Node counts of saved ensembles.
    TreeSize(TreeSizeArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long, value_name = "DIR")]
    images: PathBuf,
    /// Camera profile JSON: {name, darkness_level, saturation_level}.
    #[arg(long, value_name = "FILE")]
    profile: PathBuf,
    /// JSON object mapping image ids to lists of {x, y, w, h} rectangles.
    #[arg(long, value_name = "FILE")]
    masks: Option<PathBuf>,
    /// CSV `image_id,r,g,b` with ground-truth illuminants.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Append the shades-of-gray feature pair.
    #[arg(long)]
    sg: bool,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feature noise standard deviation [default: 0.02].
    #[arg(long)]
    noise: Option<f64>,
    /// Correlation of the r and g noise within a feature pair [default: 0.6].
    #[arg(long)]
    correlation: Option<f64>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Tree growing flags shared by `train` and `crossval`.
#[derive(Debug, Args)]
struct FitArgs {
    /// recovery, reproduction, taxicab, euclidean or ped.
    #[arg(long)]
    measure: Option<String>,
    /// Train the per-channel squared-error baseline instead.
    #[arg(long)]
    baseline: bool,
    /// Trees (multivariate) or repeats (baseline) [default: 30].
    #[arg(long)]
    trees: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    rand_pct: Option<f64>,
    /// Average node error below which a node becomes a leaf [default: 0.5].
    #[arg(long)]
    threshold: Option<f64>,
    /// [default: 10]
    #[arg(long)]
    min_parent: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    min_leaf: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Measure for the error column [default: the model's].
    #[arg(long)]
    measure: Option<String>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CrossvalArgs {
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
    /// [default: 10]
    #[arg(long)]
    folds: Option<usize>,
    /// [default: 30]
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the full report, with per-image errors, as JSON.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ApproxArgs {
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[arg(long)]
    measure: String,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = illumtree::study::DEFAULT_MAX_SUBSET)]
    max_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TreeSizeArgs {
    /// Model files; rows average over models sharing a method and measure.
    #[arg(long = "model", value_name = "FILE", required = true)]
    models: Vec<PathBuf>,
    /// Write the table here instead of standard output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    if let Err(msg) = config::init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::Extract(a) => commands::extract(a, &file),
        Command::Synth(a) => commands::synth(a, &file),
        Command::Train(a) => commands::train(a, &file),
        Command::Predict(a) => commands::predict(a),
        Command::Crossval(a) => commands::crossval(a, &file),
        Command::ApproxError(a) => commands::approx_error(a),
        Command::TreeSize(a) => commands::tree_size(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
