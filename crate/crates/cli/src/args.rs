use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::settings::{flag, Flags};

#[derive(Debug, Parser)]
#[command(name = "offgrid-sr", version, about = "Off-the-grid spike super-resolution on the torus")]
pub struct Cli {
    /// INI-style config file; the header-less part and the command's section apply.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Upper bound on worker threads (also capped by OFFGRID_SR_THREADS).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic measure and its noisy observation.
    Generate(GenerateArgs),
    /// Run the Frank-Wolfe solver on an observation.
    Solve(SolveArgs),
    /// Recover atoms from a solver state.
    Extract(ExtractArgs),
    /// Compare a recovered measure with the ground truth.
    Eval(EvalArgs),
    /// Parameter sweeps over synthetic instances.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Default)]
pub struct OperatorArgs {
    /// dirichlet | gaussian | subsampled-gaussian | foveation
    #[arg(long)]
    pub kernel: Option<String>,
    /// Cutoff frequency fc (observed frequencies |k_i| <= fc)
    #[arg(long)]
    pub fc: Option<usize>,
    /// Ambient dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Kernel widths, one value or one per axis (comma-separated).
    #[arg(long)]
    pub sigma: Option<String>,
    /// Sampling grid side L.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Fine-grid refinement factor override.
    #[arg(long)]
    pub q: Option<usize>,
    /// Foveation width growth away from the centre
    #[arg(long)]
    pub fovea_gain: Option<f64>,
}

impl OperatorArgs {
    pub fn flags(&self) -> Flags {
        vec![
            flag("kernel", &self.kernel),
            flag("fc", &self.fc),
            flag("d", &self.d),
            flag("sigma", &self.sigma),
            flag("grid", &self.grid),
            flag("q", &self.q),
            flag("fovea_gain", &self.fovea_gain),
        ]
    }
}

pub const OPERATOR_KEYS: &[&str] = &["kernel", "fc", "d", "sigma", "grid", "q", "fovea_gain"];

#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    /// Regularization relative to sup |Phi^* y|
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Toeplitz penalty weight
    #[arg(long)]
    pub rho: Option<f64>,
    /// Relaxation order (defaults to fc).
    #[arg(long)]
    pub level: Option<usize>,
    /// Stop when the objective decrease falls below this
    #[arg(long)]
    pub eps_stop: Option<f64>,
    /// Power-iteration angle tolerance
    #[arg(long)]
    pub power_tol: Option<f64>,
    /// Power-iteration cap
    #[arg(long)]
    pub power_maxit: Option<usize>,
    /// L-BFGS relative function/step tolerance
    #[arg(long)]
    pub bfgs_tol: Option<f64>,
    /// L-BFGS iteration cap
    #[arg(long)]
    pub bfgs_maxit: Option<usize>,
    /// L-BFGS memory
    #[arg(long)]
    pub bfgs_memory: Option<usize>,
    /// Frank-Wolfe iteration cap (exit code 2 when reached)
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
}

impl SolverArgs {
    pub fn flags(&self) -> Flags {
        vec![
            flag("lambda0", &self.lambda0),
            flag("rho", &self.rho),
            flag("level", &self.level),
            flag("eps_stop", &self.eps_stop),
            flag("power_tol", &self.power_tol),
            flag("power_maxit", &self.power_maxit),
            flag("bfgs_tol", &self.bfgs_tol),
            flag("bfgs_maxit", &self.bfgs_maxit),
            flag("bfgs_memory", &self.bfgs_memory),
            flag("max_outer_iters", &self.max_outer_iters),
        ]
    }
}

pub const SOLVER_KEYS: &[&str] = &[
    "lambda0",
    "rho",
    "level",
    "eps_stop",
    "power_tol",
    "power_maxit",
    "bfgs_tol",
    "bfgs_maxit",
    "bfgs_memory",
    "max_outer_iters",
];

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    /// Number of atoms.
    #[arg(long)]
    pub r: Option<usize>,
    /// signed | positive
    #[arg(long)]
    pub amplitudes: Option<String>,
    /// Relative noise level ||w|| / ||y0||.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Instance seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Redraw until the minimum separation exceeds this.
    #[arg(long)]
    pub min_separation: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Output directory of `generate` (supplies the observation and operator).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Observation CSV (`re,im`), overriding the one in --input.
    #[arg(long)]
    pub observation: Option<PathBuf>,
    #[command(flatten)]
    pub op: OperatorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Seed of the power-iteration start vectors
    #[arg(long)]
    pub seed: Option<u64>,
    /// binary | csv
    #[arg(long)]
    pub factor_format: Option<String>,
    /// Write measured wall times into the trace (false writes zeros, for byte-stable output).
    #[arg(long)]
    pub record_timing: Option<bool>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Output directory of `solve`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// lsq | debiased
    #[arg(long)]
    pub method: Option<String>,
    /// Seed of the random combination of multiplication matrices
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth measure CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Recovered measure CSV.
    #[arg(long)]
    pub recovered: Option<PathBuf>,
    /// Matching tolerance for the Jaccard index.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Also write metrics.csv into this directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sweeps to run: iterations, rank, grid (comma-separated).
    #[arg(long)]
    pub sweeps: Option<String>,
    #[command(flatten)]
    pub op: OperatorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Sparsity levels of the iterations sweep.
    #[arg(long = "r-list")]
    pub r_list: Option<String>,
    /// Penalties of the rank and grid sweeps.
    #[arg(long = "rho-list")]
    pub rho_list: Option<String>,
    /// Regularization levels of the grid sweep.
    #[arg(long = "lambda0-list")]
    pub lambda0_list: Option<String>,
    /// Sparsity of the rank and grid sweeps.
    #[arg(long)]
    pub sweep_r: Option<usize>,
    /// Trials per cell.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// First trial seed.
    /// First trial seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative noise level of every trial
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}
