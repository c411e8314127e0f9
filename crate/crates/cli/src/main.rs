mod commands;
mod manifest;

use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use harmonize_core::audit::{EfficacyMode, LeakageTask};

#[derive(Parser, Debug)]
#[command(name = "harmonize", version, about = "Leakage-free multi-site feature harmonization")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Use full-size repetition and permutation counts (100 / 5000).
    #[arg(long, global = true)]
    pub paper_scale: bool,

    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a harmonization model on a training table.
    Fit(FitArgs),
    /// Apply a fitted model to a table.
    Apply(ApplyArgs),
    /// Generate a synthetic multi-site table.
    Simulate(SimulateArgs),
    /// Repeated k-fold evaluation of a predictor.
    Cv(CvArgs),
    /// Test whether the site is still predictable after harmonization.
    Efficacy(EfficacyArgs),
    /// Compare external, leaked and not-leaked internal performance.
    AuditLeakage(LeakageArgs),
    /// Box-counting fractal dimension of a voxel grid.
    Fd(FdArgs),
    /// Bhattacharyya coefficient of a column across groups.
    Bc(BcArgs),
    /// Partial eta squared of the site effect per feature.
    Ancova(AncovaArgs),
}

#[derive(Args, Debug, Clone)]
pub struct TableArgs {
    /// Subject id column.
    #[arg(long, default_value = "subject_id")]
    pub id_column: String,

    /// Site column.
    #[arg(long, default_value = "site")]
    pub site_column: String,

    /// Non-feature columns to load besides those the command needs.
    #[arg(long, value_delimiter = ',')]
    pub extra_covariates: Vec<String>,

    /// Feature columns (default: every remaining column).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Covariate model, e.g. `age:spline5,sex`.
    #[arg(long, default_value = "")]
    pub covariates: String,
    /// Disable empirical Bayes shrinkage.
    #[arg(long)]
    pub no_eb: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Args, Debug)]
pub struct ApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Named preset such as `ct-k36-n25`.
    #[arg(long, required_unless_present = "sites")]
    pub preset: Option<String>,
    /// Number of sites (3, 10 or 36) when no preset is given.
    #[arg(long, conflicts_with = "preset", requires = "per_site")]
    pub sites: Option<usize>,
    #[arg(long, conflicts_with = "preset")]
    pub per_site: Option<usize>,
    /// `ct` or `fd` baseline when no preset is given.
    #[arg(long, default_value = "ct", conflicts_with = "preset")]
    pub kind: String,
    #[arg(long)]
    pub gamma_sd: Option<f64>,
    #[arg(long)]
    pub epsilon_sd: Option<f64>,
    /// No scale effect (delta = 1 everywhere).
    #[arg(long)]
    pub unit_scale: bool,
    /// Output CSV; ground truth goes to `<stem>.truth.json` beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HarmonizeWhere {
    None,
    InCv,
    All,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `site` or a covariate column.
    #[arg(long, default_value = "site")]
    pub target: String,
    #[arg(long, value_enum, default_value = "in-cv")]
    pub harmonize: HarmonizeWhere,
    #[arg(long, default_value = "age:spline5")]
    pub covariates: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Args, Debug)]
pub struct EfficacyArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// raw, harmonize_all or harmonizer_in_cv.
    #[arg(long)]
    pub mode: EfficacyMode,
    #[arg(long, default_value = "age:spline5")]
    pub covariates: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub perms: Option<usize>,
    #[arg(long, default_value = "age")]
    pub age_column: String,
    #[arg(long, default_value_t = 5.0)]
    pub bin_width: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Args, Debug)]
pub struct LeakageArgs {
    #[arg(long, required_unless_present = "data")]
    pub preset: Option<String>,
    #[arg(long, conflicts_with = "preset")]
    pub data: Option<PathBuf>,
    /// site or age.
    #[arg(long, default_value = "site")]
    pub task: LeakageTask,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Repetitions of the inner 5-fold CV.
    #[arg(long)]
    pub inner_reps: Option<usize>,
    /// Skip the harmonizer-in-pipeline arm.
    #[arg(long)]
    pub no_not_leaked: bool,
    /// Comparisons for the Bonferroni adjustment.
    #[arg(long, default_value_t = 2)]
    pub comparisons: usize,
    #[arg(long, default_value = "age:spline5")]
    pub covariates: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Args, Debug)]
pub struct FdArgs {
    /// Voxel grid file.
    #[arg(long, required_unless_present = "shape")]
    pub grid: Option<PathBuf>,
    /// Built-in grid: `cube:N`, `slab:N` or `menger:LEVEL`.
    #[arg(long, conflicts_with = "grid")]
    pub shape: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub offsets: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BcArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "age")]
    pub column: String,
    /// `site` or a categorical covariate.
    #[arg(long, default_value = "site")]
    pub group_by: String,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Args, Debug)]
pub struct AncovaArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "age")]
    pub covariates: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
}

/// Failure of a command; validation errors exit 1, internal ones exit 2.
#[derive(Debug)]
pub enum CliError {
    Validation { kind: String, message: String },
    Internal(String),
}

impl From<harmonize_core::Error> for CliError {
    fn from(e: harmonize_core::Error) -> Self {
        CliError::Validation {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Internal(_) => 2,
        }
    }

    fn report(&self) -> String {
        let (kind, message) = match self {
            CliError::Validation { kind, message } => (kind.as_str(), message.as_str()),
            CliError::Internal(m) => ("internal", m.as_str()),
        };
        serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::Validation {
                kind: "usage".into(),
                message: e.to_string().lines().next().unwrap_or("invalid arguments").to_string(),
            };
            eprintln!("{}", err.report());
            return ExitCode::from(err.code());
        }
    };

    panic::set_hook(Box::new(|_| {}));
    let outcome = panic::catch_unwind(|| commands::run(&cli)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(CliError::Internal(msg))
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.code())
        }
    }
}
