use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use supblock::graph::EdgeListFormat;
use supblock::FitConfig;

#[derive(Parser, Debug)]
#[command(
    name = "supblock",
    version,
    about = "Supervised stochastic blockmodels for node classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit one model and write its posterior and parameters.
    Fit(FitArgs),
    /// Predict classes from a fit directory.
    Predict(PredictArgs),
    /// One split, one fit, one macro-F1 score.
    Evaluate(EvaluateArgs),
    /// Repeated holdout over models and role counts.
    Benchmark(BenchmarkArgs),
    /// Sample a synthetic network with known roles.
    Generate(GenerateArgs),
    /// Summary network, node-role matrix and role-class table of a fit.
    Export(ExportArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Whitespace,
    Csv,
}

impl From<Format> for EdgeListFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Whitespace => EdgeListFormat::Whitespace,
            Format::Csv => EdgeListFormat::Csv,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// Edge list, one `sender receiver` pair per line.
    #[arg(long)]
    pub edges: PathBuf,
    /// Labels, one `node class` pair per line.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Whitespace)]
    pub format: Format,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HyperArgs {
    /// Number of roles (SBM: must equal the number of classes; others default to C+2).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = FitConfig::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = FitConfig::default().beta1)]
    pub beta1: f64,
    #[arg(long, default_value_t = FitConfig::default().beta2)]
    pub beta2: f64,
    #[arg(long, default_value_t = FitConfig::default().eta_dir)]
    pub eta_dir: f64,
    #[arg(long, default_value_t = FitConfig::default().alpha_pair)]
    pub alpha_pair: f64,
    #[arg(long, default_value_t = FitConfig::default().beta_smmb)]
    pub beta_smmb: f64,
    /// L2 penalty on the softmax weights.
    #[arg(long, default_value_t = FitConfig::default().l2_eta)]
    pub l2_eta: f64,
    #[arg(long, default_value_t = FitConfig::default().restarts)]
    pub restarts: usize,
    #[arg(long, default_value_t = FitConfig::default().tol)]
    pub tol: f64,
    #[arg(long, default_value_t = FitConfig::default().max_sweeps)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = FitConfig::default().max_outer)]
    pub max_outer: usize,
    /// Count self-pairs and self-loops in the SBM/SSMB likelihood.
    #[arg(long)]
    pub self_loops: bool,
    /// Literal update forms: self-pairs included, per-pair receiver factor in SMMB.
    #[arg(long)]
    pub paper_verbatim_update: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl HyperArgs {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            k: self.k,
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            eta_dir: self.eta_dir,
            alpha_pair: self.alpha_pair,
            beta_smmb: self.beta_smmb,
            l2_eta: self.l2_eta,
            restarts: self.restarts,
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            max_outer: self.max_outer,
            self_loops: self.self_loops,
            verbatim_updates: self.paper_verbatim_update,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "ssmb")]
    pub model: String,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// TRAIN/TEST assignment file; without it, labelled nodes are TRAIN.
    #[arg(long, conflicts_with = "train_fraction")]
    pub split: Option<PathBuf>,
    /// Draw a stratified split with this TRAIN fraction (seeded by --seed).
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PredictArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub fit_dir: PathBuf,
    /// Defaults to the fit directory.
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "ssmb")]
    pub model: String,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, conflicts_with = "train_fraction")]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Models to compare.
    #[arg(long, value_delimiter = ',', default_values_t = ["sbm".to_string(), "ssmb".to_string(), "smmb".to_string()])]
    pub models: Vec<String>,
    /// Role counts to sweep (ignored by the SBM, which runs at K = C).
    #[arg(long, value_delimiter = ',')]
    pub k_values: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Concurrent runs (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write the resolved configuration and run plan without fitting.
    #[arg(long)]
    pub dry_run: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenerateArgs {
    /// Built-in design: assortative, disassortative, heterogeneous, homogeneous or mixed.
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pub preset: Option<String>,
    /// JSON description of the generative process.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExportArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub fit_dir: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Minimum edge weight drawn in the summary network.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Defaults to the fit directory.
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}
