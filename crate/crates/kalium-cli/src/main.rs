//! Batch command-line interface for potassium estimation from ECG features:
//! cohort joining, feature ranking, model training/evaluation, prediction.
//!
//! Exit codes: 0 success, 1 validation or data error, 2 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::{RunConfig, VariantChoice};

#[derive(Parser)]
#[command(
    name = "kalium",
    version,
    about = "Estimate serum potassium from ECG-derived features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join ECG features to potassium labs into a labeled cohort.
    Cohort(CommonArgs),
    /// Rank features across classes and emit report + boxplot data.
    Features(CommonArgs),
    /// Cross-validate fuzzy potassium models and emit evaluation reports.
    TrainEval(CommonArgs),
    /// Apply a trained model to feature rows and explain each estimate.
    Predict(PredictArgs),
}

/// Flags shared by the cohort-based commands. Every value defaults, can be
/// set in a TOML config file, and is overridden by the flag when passed.
#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// ECG feature CSV.
    #[arg(long, value_name = "FILE")]
    ecg: Option<PathBuf>,
    /// Potassium lab CSV.
    #[arg(long, value_name = "FILE")]
    labs: Option<PathBuf>,
    /// Join window in seconds (|t_ecg - t_lab| <= window).
    #[arg(long, value_name = "SECONDS")]
    window_s: Option<i64>,
    /// Significance level for feature selection.
    #[arg(long)]
    alpha: Option<f64>,
    /// Model family to train: conventional, fcm-anfis, or both.
    #[arg(long, value_enum)]
    variant: Option<VariantChoice>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Antecedent learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Membership functions per input (conventional).
    #[arg(long)]
    mfs_per_dim: Option<usize>,
    /// Cluster count (fcm-anfis).
    #[arg(long)]
    clusters: Option<usize>,
    /// Cluster fuzziness exponent.
    #[arg(long)]
    fuzziness: Option<f64>,
    /// Cluster convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Epochs with frozen antecedents (fcm-anfis).
    #[arg(long)]
    phase_split: Option<usize>,
    /// Cross-validation fold count.
    #[arg(long)]
    folds: Option<usize>,
    /// Stratify folds by class (true/false).
    #[arg(long, value_name = "BOOL")]
    stratified: Option<bool>,
    /// Seed for clustering and fold shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated model input features (default: the significant ones).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    features: Option<Vec<String>>,
    /// Output directory for artifacts and the manifest (default: out).
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

impl CommonArgs {
    /// Defaults, then config-file values, then these flags.
    fn resolve(self) -> kalium::Result<RunConfig> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        config.apply(config::FileConfig {
            ecg: self.ecg,
            labs: self.labs,
            window_s: self.window_s,
            alpha: self.alpha,
            variant: self.variant,
            epochs: self.epochs,
            lr: self.lr,
            mfs_per_dim: self.mfs_per_dim,
            clusters: self.clusters,
            fuzziness: self.fuzziness,
            tol: self.tol,
            phase_split: self.phase_split,
            folds: self.folds,
            stratified: self.stratified,
            seed: self.seed,
            features: self.features,
            out_dir: self.out_dir,
        });
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model JSON.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// CSV of feature rows; the header must contain every model input.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Inline feature value as NAME=VALUE; repeat once per input.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    /// Output directory for predictions and the manifest (default: out).
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

fn run(command: Command) -> kalium::Result<()> {
    match command {
        Command::Cohort(args) => commands::cmd_cohort(&args.resolve()?),
        Command::Features(args) => commands::cmd_features(&args.resolve()?),
        Command::TrainEval(args) => commands::cmd_train_eval(&args.resolve()?),
        Command::Predict(args) => commands::cmd_predict(&commands::PredictConfig {
            model: args.model,
            input: args.input,
            set: args.set,
            out_dir: args.out_dir.unwrap_or_else(|| PathBuf::from("out")),
        }),
    }
}

/// 1 for validation/data errors, 2 for I/O errors (also inside a fold).
fn exit_code(error: &kalium::Error) -> u8 {
    match error {
        kalium::Error::Io { .. } => 2,
        kalium::Error::Fold { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage errors are validation errors (exit 1); --help and
            // --version print and exit 0.
            let failed = e.use_stderr();
            let _ = e.print();
            return if failed { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
