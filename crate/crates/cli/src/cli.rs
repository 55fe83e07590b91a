use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sonclust", version, about = "Weighted sum-of-norms convex clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the clustering problem at one value of gamma.
    Solve(SolveArgs),
    /// Trace clusters over an increasing gamma grid.
    Path(PathArgs),
    /// Run a timing suite on two-half-moon data.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    /// Two interlocking half moons in the plane.
    Halfmoon,
    /// Eight-component unbalanced Gaussian mixture scaled to the unit square.
    Ugauss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    /// Each CSV row is one observation.
    Rows,
    /// Each CSV column is one observation.
    Columns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Ssnal,
    Iadmm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LinearSolverArg {
    /// Sparse Cholesky for d <= 4, conjugate gradient otherwise.
    Auto,
    Cg,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    ScalingN,
    ScalingK,
    GammaSensitivity,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct SourceArgs {
    /// Numeric CSV file with the observations.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Built-in synthetic dataset.
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// CSV layout of `--input`.
    #[arg(long, value_enum, default_value = "rows")]
    pub orientation: OrientationArg,
    /// Skip the first CSV line.
    #[arg(long)]
    pub header: bool,
    /// Min-max scale every coordinate of `--input` into [0, 1].
    #[arg(long)]
    pub scale: bool,
    /// Number of half-moon points.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Half-moon noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    /// Divide every unbalanced-Gaussian component size by this factor.
    #[arg(long, default_value_t = 1)]
    pub size_divisor: usize,
    /// Seed of the synthetic generators.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Neighbors per observation in the k-NN graph.
    #[arg(long, default_value_t = 10)]
    pub knn: usize,
    /// Weight decay: w_ij = exp(-phi ||a_i - a_j||^2).
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    /// Relative KKT tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "ssnal")]
    pub solver: SolverKind,
    /// ADMM sweeps used to warm-start the Newton solver.
    #[arg(long, default_value_t = 100)]
    pub warmstart_iters: usize,
    /// Outer iteration cap (ADMM sweeps for `--solver iadmm`).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Linear solver for the Newton systems.
    #[arg(long, value_enum, default_value = "auto")]
    pub linear_solver: LinearSolverArg,
    /// Relative distance below which two centroids fuse.
    #[arg(long, default_value_t = 1e-5)]
    pub cluster_tol: f64,
    /// Compare all centroid pairs when forming clusters.
    #[arg(long)]
    pub all_pairs_merge: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Regularization strength.
    #[arg(long)]
    pub gamma: f64,
    /// Output directory (created if missing).
    #[arg(long, default_value = "sonclust-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid `start:step:stop` or a single value.
    #[arg(long)]
    pub gamma_grid: String,
    /// Solve every grid point independently instead of warm-starting.
    #[arg(long)]
    pub cold: bool,
    #[arg(long, default_value = "sonclust-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Half-moon sizes for scaling-n.
    #[arg(long, value_delimiter = ',', default_values_t = [200, 500, 1000, 2000])]
    pub sizes: Vec<usize>,
    /// Neighbor counts for scaling-k.
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50])]
    pub ks: Vec<usize>,
    /// Size used by scaling-k and gamma-sensitivity.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Neighbors for scaling-n and gamma-sensitivity.
    #[arg(long, default_value_t = 10)]
    pub knn: usize,
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Override the suite's gamma grid (`start:step:stop`).
    #[arg(long)]
    pub gamma_grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub warmstart_iters: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub linear_solver: LinearSolverArg,
    #[arg(long, default_value = "sonclust-out")]
    pub out: PathBuf,
}
