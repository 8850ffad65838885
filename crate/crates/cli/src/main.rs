use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

mod commands;
mod input;
mod manifest;

#[derive(Parser, Debug)]
#[command(name = "treeagg", version, about = "Tree-guided aggregation of rare count features")]
struct Cli {
    /// Worker threads for path fits, folds and replicates.
    #[arg(long, global = true, env = "TREEAGG_THREADS", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit at one (lambda, alpha).
    Fit(FitArgs),
    /// Cross-validate over a grid and refit at the selected point.
    Cv(CvArgs),
    /// Simulation sweeps.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Monte Carlo checks of the theory.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Build or cut feature trees.
    #[command(subcommand)]
    Tree(TreeCommand),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Design matrix CSV (dense with feature-id header, or `row,col,value` triplets).
    #[arg(long)]
    pub x: PathBuf,
    /// Response, one value per line.
    #[arg(long)]
    pub y: PathBuf,
    /// Parent-list CSV with header `node_id,parent_id[,height]`.
    #[arg(long)]
    pub tree: PathBuf,
    /// Rescale X so that the summed counts have squared norm n.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub intercept: bool,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps_abs: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps_rel: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value = "treeagg-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 50)]
    pub n_lambda: usize,
    #[arg(long, default_value_t = 8)]
    pub n_alpha: usize,
    /// Smallest over largest lambda of the default grid.
    #[arg(long, default_value_t = 1e-4)]
    pub lambda_ratio: f64,
    /// Explicit lambda values; with `--alphas` replaces the default grid.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Clip predictions to `lo,hi` before scoring.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub clip: Option<Vec<f64>>,
    /// Select by the one-standard-error rule instead of the minimum.
    #[arg(long)]
    pub one_se: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    LowDim,
    HighDim,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "low-dim")]
    pub preset: Preset,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub n_alpha: usize,
    #[arg(long, default_value_t = 50)]
    pub n_lambda: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda_ratio: f64,
    /// ADMM penalty; defaults to a value scaled to the design.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value = "treeagg-out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum SimulateCommand {
    /// Error against the number of true groups.
    Scenario {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,25")]
        k: Vec<usize>,
    },
    /// Prediction error against the spread of the latent vectors.
    Distortion {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.15,0.2,0.25,0.3")]
        tau: Vec<f64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum VerifyCommand {
    /// Least-squares error on a column with k nonzero entries.
    Ols {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 100_000)]
        replicates: usize,
        /// Extra dense N(0, 1) columns in the design.
        #[arg(long, default_value_t = 0)]
        companions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "treeagg-out")]
        out: PathBuf,
    },
    /// Support recovery with and without aggregation on the identity design.
    Recovery {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Nonzero block coefficient; defaults to the top of the admissible window.
        #[arg(long)]
        signal: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "treeagg-out")]
        out: PathBuf,
    },
    /// Prediction error bound on simulated data.
    Bound {
        #[arg(long, value_enum, default_value = "high-dim")]
        preset: Preset,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value = "treeagg-out")]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum LinkageArg {
    Complete,
    Average,
    Single,
    Ward,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum CutModeArg {
    Height,
    Density,
}

#[derive(Subcommand, Debug)]
pub enum TreeCommand {
    /// Hierarchical clustering of feature vectors (one row per feature).
    Build {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, value_enum, default_value = "complete")]
        linkage: LinkageArg,
        #[arg(long, default_value = "treeagg-out")]
        out: PathBuf,
    },
    /// Aggregating set from a tree.
    Cut {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, value_enum, default_value = "height")]
        mode: CutModeArg,
        #[arg(long)]
        threshold: f64,
        /// Design matrix, required by the density mode.
        #[arg(long)]
        x: Option<PathBuf>,
        #[arg(long, default_value = "treeagg-out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: {}", e);
        return ExitCode::from(1);
    }
    let res = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Cv(a) => commands::cv(&a),
        Command::Simulate(c) => commands::simulate(&c),
        Command::Verify(c) => commands::verify(&c),
        Command::Tree(c) => commands::tree(&c),
    };
    match res {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(1)
        }
    }
}
