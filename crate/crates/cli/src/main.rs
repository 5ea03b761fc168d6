//! `envymarket`: generate synthetic cohorts, run mechanisms and the cutoff
//! solver, audit envy, estimate the difference-in-differences and run the
//! remove-manipulation counterfactual. Stages talk to each other only through
//! files in `--out-dir`.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use envymarket_core::market::Mechanism;
use envymarket_core::policy::{CovariateMode, PeerMode};
use envymarket_core::scenario::ScenarioError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "envymarket", version, about = "School-choice markets with priority manipulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for the manifest and all result files.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every cohort of a scenario and write economies, lists, moves and the panel.
    Generate(GenerateArgs),
    /// Run IA or DA on one economy.
    Match(MatchArgs),
    /// Solve for market-clearing cutoffs.
    Equilibrium(EquilibriumArgs),
    /// Justified-envy and manipulation-envy audits of a matching.
    Audit(MatchArgs),
    /// Difference-in-differences on a panel, optionally per subgroup.
    Did(DidArgs),
    /// Remove-manipulation counterfactual with winners/losers tables.
    Counterfactual(CounterfactualArgs),
    /// Specification curve over controls, fixed effects and treatment definitions.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Match(_) => "match",
            Command::Equilibrium(_) => "equilibrium",
            Command::Audit(_) => "audit",
            Command::Did(_) => "did",
            Command::Counterfactual(_) => "counterfactual",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides `simulation.master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Where a single economy comes from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct EconomySource {
    /// Scenario file; the economy is the cohort of `--year`.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Economy JSON as written by `generate`.
    #[arg(long)]
    pub economy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub source: EconomySource,
    /// Cohort year (scenario input); defaults to the counterfactual year or the last cohort.
    #[arg(long)]
    pub year: Option<i32>,
    /// Rank-order lists CSV (student_id,rank,school_id); defaults to truthful lists.
    #[arg(long)]
    pub rols: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MechanismArg::Ia)]
    pub mechanism: MechanismArg,
    /// Lottery seed; defaults to the scenario master seed, or 0 for economy files.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Students register at their best-response action at the market-clearing
    /// cutoffs instead of their recorded (or null) action.
    #[arg(long)]
    pub best_response: bool,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[command(flatten)]
    pub source: EconomySource,
    #[arg(long)]
    pub year: Option<i32>,
    /// Number of solver starts; the first is all-unconstrained.
    #[arg(long, default_value_t = 1)]
    pub multistart: usize,
    /// Seed for the random starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep limit (default 10 · schools · students).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Also write the direct / general-equilibrium split of aggregate deception.
    #[arg(long)]
    pub decompose: bool,
}

/// Where a panel comes from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct PanelSource {
    /// Panel CSV.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Scenario file; the panel is simulated first.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DidArgs {
    #[command(flatten)]
    pub source: PanelSource,
    /// 1 for the pooled regression only, 8 to add the gender × income × education table.
    #[arg(long, default_value_t = 1, value_parser = clap::builder::PossibleValuesParser::new(["1", "8"]).map(|s| s.parse::<u8>().expect("validated")))]
    pub subgroups: u8,
    /// Also fit the penultimate-year placebo outcome.
    #[arg(long)]
    pub placebo: bool,
    /// Cluster-bootstrap replications of the interaction (0 = off).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    /// Bootstrap seed; also overrides the scenario seed when simulating.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CounterfactualArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Defaults to `simulation.manipulation_reps`.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Overrides `simulation.master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = MechanismArg::Ia)]
    pub mechanism: MechanismArg,
    /// Cohort to reallocate; defaults to the counterfactual year or the last cohort.
    #[arg(long)]
    pub year: Option<i32>,
    #[arg(long, value_enum, default_value_t = CovariateArg::FrequencyWeighted)]
    pub covariate_mode: CovariateArg,
    #[arg(long, value_enum, default_value_t = PeerArg::Contemporaneous)]
    pub peer_mode: PeerArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: PanelSource,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Ia,
    Da,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Ia => Mechanism::Ia,
            MechanismArg::Da => Mechanism::Da,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovariateArg {
    FrequencyWeighted,
    RepAverage,
}

impl From<CovariateArg> for CovariateMode {
    fn from(m: CovariateArg) -> Self {
        match m {
            CovariateArg::FrequencyWeighted => CovariateMode::FrequencyWeighted,
            CovariateArg::RepAverage => CovariateMode::RepAverage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PeerArg {
    Contemporaneous,
    BaselineFixed,
}

impl From<PeerArg> for PeerMode {
    fn from(m: PeerArg) -> Self {
        match m {
            PeerArg::Contemporaneous => PeerMode::Contemporaneous,
            PeerArg::BaselineFixed => PeerMode::BaselineFixed,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Core(#[from] envymarket_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(_) | CliError::Core(envymarket_core::Error::Scenario(_)) => 3,
            CliError::NotConverged(_) => 4,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Scenario(_) | CliError::Core(envymarket_core::Error::Scenario(_)) => "scenario",
            CliError::Core(_) => "core",
            CliError::Io { .. } => "io",
            CliError::Invalid(_) => "invalid_input",
            CliError::NotConverged(_) => "not_converged",
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    subcommand: &'a str,
    kind: &'a str,
    exit_code: u8,
    error: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENVYMARKET_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            let report =
                ErrorReport { subcommand: cli.command.name(), kind: e.kind(), exit_code: code, error: e.to_string() };
            if std::fs::create_dir_all(&cli.out_dir).is_ok() {
                let text = serde_json::to_string_pretty(&report).expect("error report serializes");
                if let Err(io) = std::fs::write(cli.out_dir.join("error.json"), text + "\n") {
                    eprintln!("error: could not write error.json: {io}");
                }
            }
            ExitCode::from(code)
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    match threads {
        Some(0) => Err("--threads must be at least 1".into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string()),
        None => Ok(()),
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    if threads.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; --threads ignored");
    }
    Ok(())
}
