//! `stratauc`: tune weights, run auctions, simulate scenarios and analyze
//! the results.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strategy_auction::{Error, ErrorFamily, Execution};

#[derive(Parser, Debug)]
#[command(name = "stratauc", version, about = "Cost-aware strategy auctions over agent pools")]
struct Cli {
    /// Run every loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn scoring weights from bid features with the exact min-max program.
    TuneWeights(TuneArgs),
    /// Auction a task file with a pool and weights.
    RunAuction(RunArgs),
    /// Run a synthetic scenario over several seeded permutations.
    Simulate(SimulateArgs),
    /// Run every agent on every task to build a correctness matrix.
    EvaluateAll(EvaluateArgs),
    /// Per-bin pass@1, $/Mt and selection shares of a transcript.
    Analyze(AnalyzeArgs),
    /// Exact Shapley attribution of a scenario's agents.
    Shapley(ShapleyArgs),
    /// Hindsight oracle routing, and diagnostics of a transcript against it.
    Oracle(OracleArgs),
    /// Route tasks with the willingness-to-pay nearest-neighbor baseline.
    Wtp(WtpArgs),
    /// One-sample t-test and bootstrap interval against a reference value.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long, default_value_t = 256)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub embed_seed: u64,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    /// Bid features as JSONL.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// Only tune on tasks of this domain.
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long, default_value_t = 1e4)]
    pub big_m: f64,
    /// Box every weight to [-B, B]. Without it a program whose optimum
    /// is unbounded is reported as such.
    #[arg(long)]
    pub weight_bound: Option<f64>,
    #[arg(long, default_value_t = 2_000_000)]
    pub node_limit: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disable refinement, so the memory is never consulted.
    #[arg(long)]
    pub no_memory: bool,
    /// Auction the tasks in a seeded random order.
    #[arg(long)]
    pub permute: bool,
    /// Start from a saved memory bank instead of an empty one.
    #[arg(long)]
    pub memory_in: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Drop failing bidders instead of failing the task.
    #[arg(long)]
    pub lenient: bool,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario JSON; the built-in ladder scenario when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub no_memory: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, requires = "pool")]
    pub tasks: Option<PathBuf>,
    #[arg(long, requires = "tasks")]
    pub pool: Option<PathBuf>,
    /// Evaluate a scenario's generated tasks and pool instead; the built-in
    /// ladder scenario when neither this nor a task file is given.
    #[arg(long, conflicts_with_all = ["tasks", "pool"])]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub transcript: PathBuf,
    /// Leave strategy and jury tokens out of $/Mt.
    #[arg(long)]
    pub no_overhead: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ShapleyArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Permutation runs per coalition.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Value coalitions by pass@1 minus lambda times $/Mt.
    #[arg(long)]
    pub utility_lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub matrix: PathBuf,
    /// Diagnose this transcript's routing against the oracle.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct WtpArgs {
    /// Tasks the model is fit on.
    #[arg(long)]
    pub train_tasks: PathBuf,
    /// Correctness matrix over the training tasks.
    #[arg(long)]
    pub train_matrix: PathBuf,
    /// Tasks to route.
    #[arg(long)]
    pub tasks: PathBuf,
    /// Correctness matrix over the routed tasks, to score the routes.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 5.0)]
    pub wtp: f64,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Comma-separated sample values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub samples: Vec<f64>,
    #[arg(long)]
    pub reference: f64,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let Some(err) = e.downcast_ref::<Error>() else {
        return 1;
    };
    match err.family() {
        ErrorFamily::Io => 3,
        ErrorFamily::Malformed => 4,
        ErrorFamily::EmbedderMismatch => 5,
        ErrorFamily::WeightPoolMismatch => 6,
        ErrorFamily::Tuning => 7,
        ErrorFamily::Agent => 8,
        ErrorFamily::Input | ErrorFamily::Analysis => 9,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let result = match cli.command {
        Command::TuneWeights(a) => commands::tune_weights(a),
        Command::RunAuction(a) => commands::run_auction(a, exec),
        Command::Simulate(a) => commands::simulate(a, exec),
        Command::EvaluateAll(a) => commands::evaluate_all(a, exec),
        Command::Analyze(a) => commands::analyze(a),
        Command::Shapley(a) => commands::shapley(a, exec),
        Command::Oracle(a) => commands::oracle(a),
        Command::Wtp(a) => commands::wtp(a),
        Command::Stats(a) => commands::stats(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
