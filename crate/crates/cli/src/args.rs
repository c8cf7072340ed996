use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ecoinf", version, about = "Ecological inference from aggregate data")]
pub struct Cli {
    /// Only log errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// Log debug detail.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ECOINF_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Estimate global cell means.
    Estimate(EstimateArgs),
    /// Deterministic bounds on local and global cell means.
    Bounds(BoundsArgs),
    /// Goodman regression diagnostics per geography.
    Diagnose(DiagnoseArgs),
    /// Generate a simulated table with known truth.
    Simulate(SimulateArgs),
    /// Score methods against a truth file.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Goodman,
    GoodmanZ,
    Dml,
    King,
    KingEm,
    Rosen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Aggregate CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub method: MethodName,
    /// Covariates for `goodman-z` (default: every covariate in the table).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Basis for `dml`, e.g. `z1:spline(5),z2:bins(5)`.
    #[arg(long)]
    pub basis: Option<String>,
    /// Constrain `dml` counterfactuals; only `0,1` is supported.
    #[arg(long)]
    pub bounds: Option<String>,
    /// Ridge penalty for `dml`: `auto` or a value.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Weight Goodman regressions by population.
    #[arg(long)]
    pub weighted: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Posterior draws per geography (`king`).
    #[arg(long, default_value_t = ecoinf::king::DEFAULT_DRAWS)]
    pub draws: usize,
    /// Burn-in (`king`, `rosen`).
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Saved iterations per chain (`rosen`).
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// Write per-geography estimates.
    #[arg(long)]
    pub local: bool,
    /// Write per-geography DML scores.
    #[arg(long)]
    pub scores: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalBounds {
    Weighted,
    Stacked,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = GlobalBounds::Weighted)]
    pub global: GlobalBounds,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Covariates interacted with the shares.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long)]
    pub weighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
    #[value(name = "C", alias = "c")]
    C,
    #[value(name = "D", alias = "d")]
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfoundingName {
    Logistic,
    Linear,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioName,
    #[arg(long = "G", default_value_t = 20)]
    pub geographies: usize,
    #[arg(long, default_value_t = ecoinf::sim::REFERENCE_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ConfoundingName::Logistic)]
    pub confounding: ConfoundingName,
    /// Sd of local deviations from `f_k(z)` (scenarios C and D).
    #[arg(long, default_value_t = 0.03)]
    pub noise: f64,
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Truth CSV written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "goodman")]
    pub methods: Vec<MethodName>,
    /// Basis for `dml` (default: linear in every covariate).
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
