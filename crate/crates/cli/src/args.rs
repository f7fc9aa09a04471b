use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "permqmc", version, about = "Cubature rules for permutation-invariant periodic functions")]
pub struct Cli {
    /// TOML experiment configuration; command-line flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// worker threads (defaults to all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// certificate tolerance relative to the initial error; larger certificates flag the result
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Component-by-component construction of a lattice rule
    Cbc(CbcArgs),
    /// Search for a shift of an existing lattice rule
    ShiftSearch(ShiftArgs),
    /// Evaluate the error of a rule file
    ErrorEval(ErrorArgs),
    /// Build an approximation-based cubature rule
    ApproxBuild(ApproxArgs),
    /// Run a convergence study and write a CSV table
    Convergence(ConvergenceArgs),
    /// Apply a rule to a test integrand
    Integrate(IntegrateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    /// R(m) = 2 pi m
    Korobov,
    /// R(m) = m
    Plain,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalArg {
    Closed,
    Spectral,
}

#[derive(Args, Debug, Default)]
pub struct SpaceArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    #[arg(long = "c-r")]
    pub c_r: Option<f64>,
    /// dimension
    #[arg(short, long)]
    pub d: Option<usize>,
    /// invariant coordinates, 1-based and comma separated; "all" or "none"
    #[arg(long)]
    pub invariant: Option<String>,
    #[arg(long, value_enum)]
    pub eval: Option<EvalArg>,
}

#[derive(Args, Debug, Default)]
pub struct OutputArgs {
    /// write the rule file here
    #[arg(long)]
    pub out_rule: Option<PathBuf>,
    /// write the JSON result here
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Minimize,
    Average,
}

#[derive(Args, Debug)]
pub struct CbcArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// number of points (prime)
    #[arg(short, long)]
    pub n: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// exponent of the better-than-average rule
    #[arg(long)]
    pub lambda: Option<f64>,
    /// shift trials after the construction; 0 skips the search
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ShiftArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// lattice rule file
    #[arg(long)]
    pub rule: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// every route that applies to the rule
    All,
    /// worst-case error of the rule itself
    Worst,
    /// mean over shifts by the kernel sum
    Kernel,
    /// mean over shifts by the coordinate decomposition
    Decomposition,
    /// truncated dual-lattice sum
    Spectral,
}

#[derive(Args, Debug)]
pub struct ErrorArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub rule: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    /// truncation of the dual-lattice sums
    #[arg(long)]
    pub half_width: Option<u64>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// requested number of nodes
    #[arg(short = 'N', long = "N")]
    pub big_n: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub search_budget: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// lattice sizes, comma separated primes
    #[arg(short, long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    /// assembled rule sizes, comma separated
    #[arg(short = 'N', long = "N", value_delimiter = ',')]
    pub big_n: Option<Vec<u64>>,
    /// dimensions for the E^2 n versus d table, at the first lattice size
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// CSV for the dimension table
    #[arg(long)]
    pub dims_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub rule: PathBuf,
    /// integrand description in TOML or JSON
    #[arg(long, conflicts_with = "constant")]
    pub integrand: Option<PathBuf>,
    /// integrate the constant function with this value
    #[arg(long)]
    pub constant: Option<f64>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}
