//! `yieldcast` command-line front end.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Sub-national crop yield hindcasting and in-season forecasting.
///
/// Settings resolve in this order: command-line flag, run-configuration
/// file, then built-in default. The seed additionally falls back to the
/// YIELDCAST_SEED environment variable before the built-in default.
#[derive(Parser, Debug)]
#[command(name = "yieldcast", version, about, long_about)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Worker threads for parallel folds and splits (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic planted-signal panel (dekadal.csv, yield.csv, truth.json).
    Synth(SynthArgs),
    /// Validate inputs, aggregate pixels and write the aligned dataset.
    Ingest(CommonArgs),
    /// Write the monthly feature table with the trend covariate.
    Features(FeaturesArgs),
    /// Run the nested leave-one-year-out hindcast and write the report.
    Hindcast(HindcastArgs),
    /// Refit selected pipelines on all labelled years and forecast one season.
    Forecast(ForecastArgs),
    /// Shapley attributions for a selected pipeline.
    Explain(ExplainArgs),
    /// Re-emit tables and charts from an existing report.json.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// JSON generator spec; missing fields take defaults.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    years: Option<usize>,
    /// Standard deviation of the label noise (t/ha).
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Slope on the years-since-start trend term (t/ha per year).
    #[arg(long)]
    trend_slope: Option<f64>,
}

/// Inputs shared by every data-reading subcommand.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Run-configuration JSON file. Relative paths inside it resolve against its directory.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding dekadal.csv and yield.csv (as written by `synth`).
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Region-level dekadal series CSV.
    #[arg(long, value_name = "FILE", conflicts_with = "pixels")]
    dekadal: Option<PathBuf>,
    /// Pixel-level samples CSV, aggregated with crop-area weights.
    #[arg(long, value_name = "FILE")]
    pixels: Option<PathBuf>,
    /// Yield statistics CSV.
    #[arg(long, value_name = "FILE")]
    yields: Option<PathBuf>,
    /// Crop to model (maize, soybean, sunflower).
    #[arg(long)]
    crop: Option<String>,
    /// Last season month (1..=8) whose data the features may read.
    #[arg(long, value_name = "MONTH")]
    cutoff: Option<u8>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Feature set to write (default: every monthly column).
    #[arg(long)]
    feature_set: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    /// No backend.
    None,
    /// In-process k-nearest-neighbour stand-in.
    Mock,
    /// External process from the configuration's backend launch spec.
    Process,
    /// Alias of `process` for a tabular foundation-model sidecar.
    Tabpfn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReplicateChoice {
    PerYear,
    PerSample,
}

#[derive(Args, Debug)]
struct HindcastArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated regressors (lasso, svr_lin, svr_rbf, gpr, rf, gbr, xgb).
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated baselines (null, trend, peak_fpar).
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<String>>,
    /// Evaluate only these outer years.
    #[arg(long, value_delimiter = ',', value_name = "YEARS")]
    outer_years: Option<Vec<i32>>,
    /// Disable the trend/one-hot/reducer cross-product (one config per model).
    #[arg(long)]
    no_options: bool,
    /// Score a backend alongside the pipelines.
    #[arg(long, value_enum)]
    backend: Option<BackendChoice>,
    /// Also run the post-hoc ensemble with this pool size.
    #[arg(long, value_name = "N")]
    phe_pool: Option<usize>,
    /// Replicate unit of the ANOVA and Tukey tests.
    #[arg(long, value_enum)]
    replicate: Option<ReplicateChoice>,
    /// Significance level of the Tukey test.
    #[arg(long)]
    alpha: Option<f64>,
    /// Record every inner split in report.json.
    #[arg(long)]
    audit: bool,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Season (harvest year) to forecast; must be unlabelled.
    #[arg(long)]
    year: i32,
    /// CSV `region_id,estimate` of external estimates to compare against.
    #[arg(long, value_name = "FILE")]
    external: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    no_options: bool,
    #[arg(long, value_enum)]
    backend: Option<BackendChoice>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    no_options: bool,
    /// Which selected pipeline to explain: "ML (selected)" or a model label such as GPR.
    #[arg(long, default_value = "ML (selected)")]
    pipeline: String,
    /// Permutations for sampled attributions (exact enumeration at 12 inputs or fewer).
    #[arg(long, default_value_t = 500)]
    permutations: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// report.json written by `hindcast`.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Features(a) => commands::features(a),
        Command::Hindcast(a) => commands::hindcast(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Explain(a) => commands::explain(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("event=command_failed error={e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
