//! Command-line driver: synthetic data, model fitting, campaign simulation,
//! baselines, ranking, evaluation and reporting.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::execute;
pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "kolsim", version, about = "Time-aware agent simulation for influencer selection")]
pub struct Cli {
    #[command(flatten)]
    pub flags: SimFlags,
    #[command(subcommand)]
    pub command: Command,
}

/// Simulation settings. Precedence: flags, then `--config`, then the
/// campaign file, then built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SimFlags {
    /// TOML file with simulation settings
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of simulated periods T
    #[arg(long, global = true)]
    pub periods: Option<u32>,
    #[arg(long, global = true)]
    pub period_minutes: Option<u32>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub theta: Option<u32>,
    /// Activity-model mixture components
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub survival_threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub policy: Option<PolicyArg>,
    #[arg(long, global = true)]
    pub llm_endpoint: Option<String>,
    /// Worker threads for parallel work
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Rule,
    Stochastic,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Celf,
    Celfpp,
    Greedy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON synthetic spec (defaults used for missing fields)
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
    },
    /// Fit the activity mixture model
    FitTimeline {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also fit per-user models for users with at least this many events
        #[arg(long)]
        per_user_min_events: Option<usize>,
    },
    /// Fit the content lifecycle survival model
    FitLifecycle {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate campaigns
    Simulate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "all_candidates", required_unless_present = "all_candidates")]
        influencer: Option<String>,
        #[arg(long)]
        all_candidates: bool,
        /// Directory holding timeline.json and lifecycle.json; fitted on the fly otherwise
        #[arg(long)]
        models: Option<PathBuf>,
        /// Directory of prompt templates for the llm policy
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Rank candidates with a greedy influence-maximization baseline
    Baseline {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Edge activation probability
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        /// Monte Carlo cascades per spread estimate
        #[arg(long, default_value_t = 1000)]
        runs: u32,
        /// Seeds to select (default: every candidate)
        #[arg(long)]
        top: Option<usize>,
    },
    /// Re-score and rank from a scores.json
    Rank {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a ranking with the gold promoters of a campaign file
    Evaluate {
        #[arg(long)]
        ranking: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "at", value_delimiter = ',', default_values_t = vec![5, 10])]
        ks: Vec<usize>,
    },
    /// Metric table for the simulator and baselines plus NDCG@10 per period
    Report {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory of `simulate --all-candidates`
        #[arg(long)]
        run: PathBuf,
        /// Extra ranking.json files to compare
        #[arg(long = "baseline")]
        baselines: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "at", value_delimiter = ',', default_values_t = vec![5, 10])]
        ks: Vec<usize>,
    },
}

/// Parses arguments and runs the command, printing diagnostics. Returns the
/// process exit code: 0 on success, 2 for usage errors, 1 for runtime errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
