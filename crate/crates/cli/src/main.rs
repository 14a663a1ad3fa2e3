mod cache;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spgc::selection::Protocol;
use spgc::training::{DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE};
use spgc::{OperatorKind, Variant};

#[derive(Parser)]
#[command(
    name = "spgc",
    version,
    about = "Single-layer linear graph convolutions: caching, training, selection and bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct CacheArgs {
    /// Directory for persisted diffusion caches.
    #[arg(long, env = "SPGC_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Build caches in memory and never write them.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute and store the diffusion cache P^0 X .. P^k X.
    Prep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "op", default_value = "laplacian")]
        operator: OperatorKind,
        #[arg(long)]
        k: usize,
        /// Keep only the rows of labeled nodes.
        #[arg(long)]
        labeled_only: bool,
        /// Output file; defaults to a name derived from the inputs inside the cache directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "SPGC_CACHE_DIR")]
        cache_dir: Option<PathBuf>,
    },
    /// Train one configuration for one or more seeds.
    Train(TrainArgs),
    /// Grid search over hyperparameters with repeated runs per cell.
    Gridsearch(GridArgs),
    /// Export the learned per-hop coefficients of a checkpoint.
    Coeffs {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Diffusion cache; required for hLGC, whose weights depend on the node.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a theoretical bound and print it as JSON.
    Bounds(BoundsArgs),
    /// Run the randomised consistency suites; exits 1 on any violation.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        graphs: usize,
        #[arg(long, default_value_t = 200)]
        mc_samples: usize,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a dataset bundle and print diagnostics.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Write a synthetic stochastic-block-model bundle.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 6)]
        features: usize,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Args, Debug, serde::Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub variant: Variant,
    /// Propagation operator; defaults to the variant's own.
    #[arg(long = "op")]
    pub operator: Option<OperatorKind>,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub wd: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_EPOCHS)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = DEFAULT_PATIENCE)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Fill the per-epoch wall time column of the history.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub cache: CacheArgs,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub variant: Variant,
    /// Grid file (`key = v1, v2, ...` lines). Without it the built-in grid for the dataset name is used.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "op")]
    pub operator: Option<OperatorKind>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub cache: CacheArgs,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct BoundsArgs {
    /// lgc, egc or truncation.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long = "M", default_value_t = 1.0)]
    pub m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lip: f64,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 2.0)]
    pub l1: f64,
    #[arg(long = "L", default_value_t = 1)]
    pub l_samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub spec_norm: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xtheta_norm: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prep { data, operator, k, labeled_only, out, cache_dir } => {
            commands::prep(&data, operator, k, labeled_only, out, cache_dir)
        }
        Command::Train(args) => commands::train(&args),
        Command::Gridsearch(args) => commands::gridsearch(&args),
        Command::Coeffs { checkpoint, cache, out } => commands::coeffs(&checkpoint, cache.as_deref(), &out),
        Command::Bounds(args) => commands::bounds(&args),
        Command::OracleCheck { seed, graphs, mc_samples, out } => {
            commands::oracle_check(seed, graphs, mc_samples, out.as_deref())
        }
        Command::Validate { data } => commands::validate(&data),
        Command::Synth { out, seed, n, classes, features, name } => {
            commands::synth(&out, seed, n, classes, features, name)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
