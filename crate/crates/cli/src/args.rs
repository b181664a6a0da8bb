//! Command-line surface. The argument structs serialize into the run
//! report so every payload carries an echo of its configuration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "lo", version, about = "Exact anti-concentration toolkit", long_about = None)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Small-ball probability of a linear, bilinear, or quadratic form.
    Rho(RhoArgs),
    /// Build a structured instance with a pigeonhole certificate.
    Construct(ConstructArgs),
    /// Mask a symmetric matrix and verify the decoupling inequality.
    Decouple(DecoupleArgs),
    /// Fit a GAP to a list of points.
    InverseLinear(InverseLinearArgs),
    /// Extract a structure certificate from a bilinear coefficient matrix.
    InverseBilinear(InverseBilinearArgs),
    /// Extract a structure certificate from a symmetric quadratic matrix.
    InverseQuadratic(InverseQuadraticArgs),
    /// Re-verify a structure certificate by exact enumeration.
    Verify(VerifyArgs),
    /// Run the acceptance suite.
    Accept(AcceptArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    Linear,
    Bilinear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    Exact,
    Mc,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RhoArgs {
    #[arg(long, value_enum)]
    pub form: FormKind,
    /// Coefficient file: a vector JSON for linear forms, a matrix JSON
    /// otherwise.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Distribution: "bernoulli", "lazy:<mu>", "sym-bernoulli",
    /// "lazy-sym-bernoulli", or a JSON file path.
    #[arg(long)]
    pub dist: String,
    /// Radius as an exact rational or decimal.
    #[arg(long)]
    pub beta: String,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: RhoMode,
    /// "sup" or a fixed center as comma-separated rationals.
    #[arg(long, default_value = "sup")]
    pub center: String,
    /// Linear witness for quadratic forms (vector JSON); zero if absent.
    #[arg(long)]
    pub bvec: Option<PathBuf>,
    /// Candidate centers for Monte-Carlo sup mode (vector JSON).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4_194_304)]
    pub budget: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConstructArgs {
    /// ex1.1 (linear gap), ex1.4 (quadratic gap), ex1.5 (rank one),
    /// ex1.6 (mixed).
    #[arg(long)]
    pub kind: String,
    /// Parameter file; see the README for the per-kind schema.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16_777_216)]
    pub cap: u128,
    #[arg(long, default_value_t = 4_194_304)]
    pub budget: u64,
    /// Skip the exact pigeonhole re-check of the built instance.
    #[arg(long, default_value_t = false)]
    pub no_check: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DecoupleArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Subset bits, e.g. 0b0101 (bit i set = row i inside).
    #[arg(long)]
    pub subset: String,
    #[arg(long)]
    pub beta: String,
    #[arg(long)]
    pub dist: String,
    #[arg(long, default_value = "1")]
    pub clog: String,
    #[arg(long)]
    pub bvec: Option<PathBuf>,
    /// Witness center; comma-separated rationals (zero if absent).
    #[arg(long)]
    pub center: Option<String>,
    /// Anti-concentration window "c1,c2,c3" to check on the distribution.
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long, default_value_t = 4_194_304)]
    pub budget: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InverseLinearArgs {
    /// Point list as a coefficient-vector JSON file.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub beta: String,
    /// Fit parameter JSON (defaults applied per field).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InverseBilinearArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub beta: String,
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Hypothesis witness rho; computed exactly when absent.
    #[arg(long)]
    pub rho: Option<String>,
    /// "exhaustive" or "sample:<count>".
    #[arg(long, default_value = "exhaustive")]
    pub ymode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4_194_304)]
    pub budget: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InverseQuadraticArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub beta: String,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<String>,
    /// "exhaustive" or "sample:<count>".
    #[arg(long, default_value = "exhaustive")]
    pub subsets: String,
    #[arg(long, default_value = "exhaustive")]
    pub ymode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "1")]
    pub clog: String,
    #[arg(long, default_value_t = 4_194_304)]
    pub budget: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub cert: PathBuf,
    #[arg(long)]
    pub dist: String,
    #[arg(long, default_value = "0")]
    pub beta: String,
    #[arg(long, default_value_t = 4_194_304)]
    pub budget: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptLevel {
    Quick,
    Full,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AcceptArgs {
    #[arg(long, value_enum, default_value = "full")]
    pub level: AcceptLevel,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}
