use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Risk-averse quantal response equilibria for matrix and Markov games.
#[derive(Debug, Parser, Serialize)]
#[command(name = "rqe", version, about)]
pub struct Cli {
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Solve a matrix game with no-regret learning.
    SolveMatrix(SolveArgs),
    /// Solve a finite-horizon Markov game by backward induction.
    SolveMarkov(SolveArgs),
    /// Score a policy file on a Markov game.
    EvalMarkov(EvalArgs),
    /// Run an error-versus-sample-size experiment from a manifest.
    Estimate(EstimateArgs),
    /// Report the tractability condition of a game.
    Check(CheckArgs),
    /// Built-in benchmark games.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Rerun the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand, Serialize)]
pub enum BenchCommand {
    /// Write a built-in game as a game file.
    Make(MakeArgs),
    /// List the built-in games.
    List,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    Kl,
    Rkl,
    Tv,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    #[value(alias = "log-barrier")]
    Logbarrier,
    #[value(alias = "neg-entropy", alias = "entropy")]
    Negentropy,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Aggregate,
    ActionDependent,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecursionKind {
    Utility,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Proximal,
    Projected,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Uniform,
    Random,
}

/// Parameters that replace those stored in a game file or the defaults of a
/// built-in game. Lists hold one value per player; a single value applies to
/// all players.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct GameOpts {
    /// Policy risk aversion (tau for kl/rkl, lambda for tv).
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Bounded-rationality weights.
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub risk: Option<RiskKind>,
    #[arg(long, value_enum)]
    pub reg: Option<RegKind>,
    #[arg(long, value_enum)]
    pub risk_mode: Option<ModeKind>,
    /// Environment penalty of a Markov game.
    #[arg(long, value_enum)]
    pub env_risk: Option<RiskKind>,
    /// Environment risk aversion; defaults to the policy values.
    #[arg(long, value_delimiter = ',')]
    pub env_tau: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub recursion_mode: Option<RecursionKind>,
    /// Grid size of a cliff walk, `WxH`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Horizon of a built-in Markov game.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Action counts of a random game.
    #[arg(long, value_delimiter = ',')]
    pub actions: Option<Vec<usize>>,
    /// State count of a random Markov game.
    #[arg(long)]
    pub states: Option<usize>,
    /// Seed of a random game.
    #[arg(long)]
    pub game_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SolverOpts {
    /// Solver settings file; flags below take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Learner seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub update: Option<UpdateKind>,
    #[arg(long, value_enum)]
    pub init: Option<InitKind>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// Game file, or `bench:<name>`.
    pub game: String,
    #[command(flatten)]
    pub game_opts: GameOpts,
    #[command(flatten)]
    pub solver: SolverOpts,
    /// Largest acceptable RQE gap; a larger gap exits with status 2.
    #[arg(long, default_value_t = 1e-2)]
    pub gap_tol: f64,
    /// Exit with status 3 when the tractability condition fails.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    pub game: String,
    /// Policy CSV written by `solve-markov`.
    pub policy: PathBuf,
    #[command(flatten)]
    pub game_opts: GameOpts,
    #[command(flatten)]
    pub solver: SolverOpts,
    #[arg(long, default_value_t = 1e-2)]
    pub gap_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    pub game: String,
    #[command(flatten)]
    pub game_opts: GameOpts,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct MakeArgs {
    /// Name of the game, with or without the `bench:` prefix.
    pub id: String,
    #[command(flatten)]
    pub game_opts: GameOpts,
    /// Output file; defaults to `<name>.json` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Directory for the rerun's outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
