use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use startrek::graphgen::GraphKind;
use startrek::harness::{Coupling, LambdaPolicy};
use startrek::io::Header;
use startrek::SolverConfig;

#[derive(Debug, Parser)]
#[command(
    name = "startrek",
    version,
    about = "Hub selection with FDR control for graphical and multitask models"
)]
pub struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true, env = "STARTREK_THREADS")]
    pub threads: Option<std::num::NonZeroUsize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select hub nodes of a Gaussian graphical model from a data matrix.
    Select(SelectArgs),
    /// Select hub responses of a multitask regression Y ≈ X Θᵀ.
    SelectMultitask(MultitaskArgs),
    /// Run a replicated simulation described by a JSON config.
    Simulate(SimulateArgs),
    /// Generate a synthetic graph and its precision matrix.
    Graphgen(GraphgenArgs),
    /// Monte-Carlo comparison of Gaussian maxima tail probabilities.
    CcbVerify(CcbArgs),
    /// Write per-node bootstrap ensembles to STKB files.
    EnsembleCache(EnsembleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HeaderArg {
    Auto,
    Present,
    Absent,
}

impl From<HeaderArg> for Header {
    fn from(h: HeaderArg) -> Self {
        match h {
            HeaderArg::Auto => Header::Detect,
            HeaderArg::Present => Header::Present,
            HeaderArg::Absent => Header::Absent,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CsvArgs {
    /// Header row handling.
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    pub header: HeaderArg,
    /// Field delimiter (single ASCII character).
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Apply log(1 + x) before centring.
    #[arg(long)]
    pub log_transform: bool,
    /// Scale every column to unit sample variance.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = SolverConfig::default().max_iter)]
    pub max_iter: usize,
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    pub tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().cv_folds)]
    pub cv_folds: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    /// Observations-by-variables CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Degree threshold defining a hub.
    #[arg(long)]
    pub k_tau: usize,
    /// Nominal FDR level.
    #[arg(long)]
    pub q: f64,
    /// Bootstrap draws.
    #[arg(long, default_value_t = 4000)]
    pub boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Graphical lasso penalty: `cv` or a positive number.
    #[arg(long, default_value = "cv")]
    pub lambda: LambdaPolicy,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MultitaskArgs {
    /// Covariates CSV (n × d₂).
    #[arg(long)]
    pub x: PathBuf,
    /// Responses CSV (n × d₁).
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub k_tau: usize,
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 4000)]
    pub boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scaled-lasso starting penalty; default 1.1·sqrt(log d₂ / n).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Decorrelation constraint level; default sqrt(log d₂ / n).
    #[arg(long)]
    pub mu: Option<f64>,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphgenArgs {
    /// hub, random, scalefree or knn.
    #[arg(long)]
    pub kind: GraphKind,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub p_groups: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Precision value on edges.
    #[arg(long)]
    pub v: Option<f64>,
    /// Eigenvalue margin.
    #[arg(long)]
    pub u: Option<f64>,
    /// Edge probability for random graphs.
    #[arg(long)]
    pub connect_prob: Option<f64>,
    /// Neighbours per node for knn graphs.
    #[arg(long)]
    pub knn_k: Option<usize>,
    /// Hub threshold used for the ground-truth file.
    #[arg(long, default_value_t = 3)]
    pub k_tau: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CcbMode {
    /// AR(1) against itself.
    Identical,
    /// AR(1) with `--rho` against AR(1) with `--rho-v`.
    Ar1,
    /// Covariances read from `--cov-u` and `--cov-v`.
    Files,
    /// Two correlated coordinates plus repeated copies of one variable.
    Counterexample,
    /// AR(1) against perturbations of one off-diagonal entry.
    Delta,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingArg {
    Independent,
    Common,
}

impl From<CouplingArg> for Coupling {
    fn from(c: CouplingArg) -> Self {
        match c {
            CouplingArg::Independent => Coupling::Independent,
            CouplingArg::Common => Coupling::Common,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CcbArgs {
    #[arg(long, value_enum)]
    pub mode: CcbMode,
    /// Dimension; also sets the threshold grid.
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long)]
    pub rho_v: Option<f64>,
    #[arg(long)]
    pub cov_u: Option<PathBuf>,
    #[arg(long)]
    pub cov_v: Option<PathBuf>,
    /// Comma-separated perturbation sizes for `delta` mode.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.02, 0.01])]
    pub deltas: Vec<f64>,
    /// Monte-Carlo samples.
    #[arg(long, default_value_t = 100_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Randomness sharing for `identical`, `ar1` and `files` modes.
    #[arg(long, value_enum, default_value_t = CouplingArg::Independent)]
    pub coupling: CouplingArg,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 4000)]
    pub boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "cv")]
    pub lambda: LambdaPolicy,
    /// Comma-separated node indices (default: every node).
    #[arg(long, value_delimiter = ',')]
    pub rows: Vec<usize>,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}
