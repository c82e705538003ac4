//! Command-line pipeline: generate Simple-BN data, train the classifier and
//! autoencoders, fit the structural model, explain instances and evaluate
//! batches of explanations.

pub mod bundle;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use proce::models::{ClassWeight, Preset};
use proce::moo::CrowdingKind;
use proce::Error;

pub use commands::{run, Outcome};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

/// Process exit code for a failed command: I/O failures map to 2, every
/// other error (usage, configuration, data, schema) to 1.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "proce", version, about = "Prototype-guided, causality-preserving counterfactual explanations")]
pub struct Cli {
    /// JSON file overriding built-in defaults; flags override the file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the Simple-BN synthetic dataset with its schema, graph and constraints.
    GenSimpleBn(GenArgs),
    /// Train the classifier and autoencoders into a bundle directory.
    Train(TrainArgs),
    /// Fit linear structural equations for a causal graph.
    FitScm(FitScmArgs),
    /// Generate counterfactual explanations.
    Explain(ExplainArgs),
    /// Score a directory of explanation reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Net3,
    Net5,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Net3 => Preset::Net3,
            PresetArg::Net5 => Preset::Net5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassWeightArg {
    None,
    Balanced,
}

impl From<ClassWeightArg> for ClassWeight {
    fn from(w: ClassWeightArg) -> Self {
        match w {
            ClassWeightArg::None => ClassWeight::None,
            ClassWeightArg::Balanced => ClassWeight::Balanced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CrowdingArg {
    Nearest,
    Standard,
}

impl From<CrowdingArg> for CrowdingKind {
    fn from(c: CrowdingArg) -> Self {
        match c {
            CrowdingArg::Nearest => CrowdingKind::Nearest,
            CrowdingArg::Standard => CrowdingKind::Standard,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with generator parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Output CSV; schema, graph and constraints files are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Label column name (overrides the schema's).
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Autoencoder latent size.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub ae_epochs: Option<usize>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long, value_enum)]
    pub class_weight: Option<ClassWeightArg>,
    /// Bundle directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitScmArgs {
    /// Bundle providing the schema, normalizer and training split.
    #[arg(long)]
    pub bundle: PathBuf,
    /// CSV to fit on instead of the bundle's training split.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub graph: PathBuf,
    /// Treat categorical children as exogenous.
    #[arg(long)]
    pub categorical_exogenous: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub scm: PathBuf,
    /// Test-split row index, inclusive range `a-b`, or inline JSON (array of
    /// raw values or object keyed by feature). Repeatable.
    #[arg(long, required = true)]
    pub instance: Vec<String>,
    #[arg(long)]
    pub target_class: Option<u8>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub crowding: Option<CrowdingArg>,
    /// Keep endogenous genes as searched instead of projecting them.
    #[arg(long)]
    pub no_causal_projection: bool,
    /// Stop after this many generations without change (0 disables).
    #[arg(long)]
    pub early_stop: Option<usize>,
    /// Worker threads for independent instances.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Store wall time in each report (makes reports run-dependent).
    #[arg(long)]
    pub record_runtime: bool,
    /// Report file for a single instance, otherwise a directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Constraint list; defaults to the schema's nondecreasing features.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    #[arg(long, default_value = "proce")]
    pub method: String,
    #[arg(long, default_value = "data")]
    pub dataset: String,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Metrics JSON of another method for paired t-tests.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Metrics CSV; a JSON twin is written with the same stem.
    #[arg(long)]
    pub out: PathBuf,
}
