use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cmtf",
    version,
    about = "CP and coupled matrix-tensor factorization with group statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a CP model to a tensor file.
    Cp(CpArgs),
    /// Jointly fit a tensor and a matrix coupled in the subjects mode.
    Acmtf(AcmtfArgs),
    /// Generate planted synthetic data.
    Synth(SynthArgs),
    /// Group-difference tests on an existing factor matrix.
    Stats(StatsArgs),
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn nonneg_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a finite nonnegative number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        Ok(v) => Err(format!("must lie in (0, 1), got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestKindArg {
    Pooled,
    Welch,
}

/// Flags shared by the fitting commands.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Number of random starts.
    #[arg(long, value_parser = positive_usize)]
    pub inits: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative objective change that stops a start.
    #[arg(long = "tol-rel-f", default_value_t = 1e-10, value_parser = nonneg_f64)]
    pub tol_rel_f: f64,
    #[arg(long = "max-iters", default_value_t = 10_000, value_parser = positive_usize)]
    pub max_iters: usize,
    /// Output directory for the result bundle.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Labels file (one 0/1 per line) enabling group-difference tests.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Skip centering and scaling.
    #[arg(long = "no-preprocess")]
    pub no_preprocess: bool,
    #[arg(long = "ttest", value_enum, default_value_t = TestKindArg::Pooled)]
    pub ttest: TestKindArg,
    /// Run starts one after another instead of on the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct CpArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = positive_usize)]
    pub rank: usize,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct AcmtfArgs {
    #[arg(long)]
    pub tensor: PathBuf,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub rank: usize,
    /// Weight of the sparsity penalty on component weights.
    #[arg(long, default_value_t = 1e-3, value_parser = nonneg_f64)]
    pub beta: f64,
    /// Relative weight below which a component counts as absent.
    #[arg(long = "share-threshold", default_value_t = 0.05, value_parser = unit_interval)]
    pub share_threshold: f64,
    /// Keep the preprocessed datasets at their own scale instead of
    /// dividing each by its Frobenius norm.
    #[arg(long = "no-unit-norm")]
    pub no_unit_norm: bool,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Paper,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["spec", "preset"])))]
pub struct SynthArgs {
    /// Spec file with `key = value` lines.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Overrides the seed of the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Subjects-by-components matrix file.
    #[arg(long)]
    pub factors: PathBuf,
    #[arg(long)]
    pub groups: PathBuf,
    #[arg(long = "ttest", value_enum, default_value_t = TestKindArg::Pooled)]
    pub ttest: TestKindArg,
}
