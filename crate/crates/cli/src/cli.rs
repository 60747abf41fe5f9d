//! Flag definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "fpps",
    version,
    about = "Point cloud registration: exact parallel NN search, SVD-based ICP, and benchmark tooling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align a source cloud onto a target cloud and print the transform
    Register(RegisterArgs),
    /// Register consecutive frame pairs of a sequence directory
    Bench(BenchArgs),
    /// Benchmark several NN backends on the same sequence and compare
    Compare(CompareArgs),
    /// Evaluate the streaming-pipeline latency model for a geometry
    Model(ModelArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputOpts {
    /// Report format written to stdout
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Also write the rendered report to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Registration knobs shared by `register`, `bench`, and `compare`.
/// Precedence: flags, then the config file, then `FPPS_*` environment
/// variables, then built-in defaults.
#[derive(Debug, Args)]
pub struct IcpOpts {
    /// NN backend: parallel, naive, or kdtree
    #[arg(long)]
    pub backend: Option<String>,
    /// Iteration cap (default 50)
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Correspondence gate in meters (default 1.0)
    #[arg(long)]
    pub max_corr_dist: Option<f64>,
    /// Convergence epsilon on the incremental transform (default 1e-5)
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Points sampled from each source frame (default 4096)
    #[arg(long)]
    pub sample_n: Option<usize>,
    /// Sampling seed (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML config file supplying any of the knobs above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Source cloud (.bin or .xyz)
    #[arg(long)]
    pub source: PathBuf,
    /// Target cloud (.bin or .xyz)
    #[arg(long)]
    pub target: PathBuf,
    /// Report file-read time alongside align time
    #[arg(long)]
    pub include_io: bool,
    #[command(flatten)]
    pub icp: IcpOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of ordered .bin frames
    #[arg(long)]
    pub seq_dir: PathBuf,
    /// Ground-truth pose file; adds a trajectory-error section
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// After the sampled alignment, refine with the full source cloud
    #[arg(long)]
    pub two_stage: bool,
    /// Previous JSON report; adds a speedup-vs-baseline aggregate
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Report file-read time alongside align time
    #[arg(long)]
    pub include_io: bool,
    #[command(flatten)]
    pub icp: IcpOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Directory of ordered .bin frames
    #[arg(long)]
    pub seq_dir: PathBuf,
    /// Comma-separated backends to race (at least two)
    #[arg(long, value_delimiter = ',')]
    pub backends: Vec<String>,
    /// After the sampled alignment, refine with the full source cloud
    #[arg(long)]
    pub two_stage: bool,
    #[command(flatten)]
    pub icp: IcpOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Pipeline geometry as a TOML file
    #[arg(long)]
    pub geometry: PathBuf,
    #[arg(long)]
    pub n_source: u64,
    #[arg(long)]
    pub n_target: u64,
    /// Vary one geometry field, e.g. `pe_cols=4,8,16,32`
    #[arg(long)]
    pub sweep: Option<String>,
    #[command(flatten)]
    pub output: OutputOpts,
}
