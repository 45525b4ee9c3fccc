use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gabm::experiments::ExperimentId;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Batch,
    Analyze,
    Plot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Live,
    Scripted,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisMode {
    /// Final blue count on the initial-split indicators.
    A1,
    /// Experiment against a base batch.
    A2,
}

/// Values that override an experiment's defaults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Overrides {
    pub temperature: Option<f64>,
    pub iterations: Option<usize>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    pub backend: Option<BackendChoice>,
    pub fallback: Option<BackendChoice>,
    pub model_id: Option<String>,
    pub oracle_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
    pub batches: Vec<PathBuf>,
    pub base: Option<PathBuf>,
}

/// A fully validated command line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    pub experiment: Option<ExperimentId>,
    pub mode: Option<AnalysisMode>,
    pub n_agents: usize,
    pub overrides: Overrides,
    pub paths: Paths,
}

#[derive(Debug, Error)]
pub enum UsageError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Invalid(String),
}

impl UsageError {
    /// Help and version requests are not failures.
    pub fn is_informational(&self) -> bool {
        matches!(self, UsageError::Clap(e) if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ))
    }
}

#[derive(Debug, Parser)]
#[command(name = "gabm", version, about = "Shirt-color norm diffusion with language-model agents")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Run one simulation and print the reasoning transcript.
    Run(SimArgs),
    /// Run many seeded simulations of one experiment.
    Batch(BatchArgs),
    /// Fit the endpoint regressions to recorded batches.
    Analyze(AnalyzeArgs),
    /// Draw a batch's trajectories as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Experiment condition, E1 to E12.
    #[arg(long, value_parser = parse_experiment)]
    experiment: ExperimentId,
    #[arg(long, value_enum, default_value_t = BackendChoice::Scripted)]
    backend: BackendChoice,
    /// Backend consulted on a replay cache miss (live or scripted).
    #[arg(long, value_enum)]
    fallback: Option<BackendChoice>,
    /// Model id sent to the endpoint; required unless the backend is scripted.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Run seed, or master seed for a batch.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the scripted oracle.
    #[arg(long, default_value_t = 0)]
    oracle_seed: u64,
    /// Replay cache file (JSON lines).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    iterations: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    parallelism: u64,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum, default_value_t = AnalysisMode::A1)]
    mode: AnalysisMode,
    /// Batch CSV; repeat for several columns.
    #[arg(long = "batch", required = true)]
    batches: Vec<PathBuf>,
    /// Base batch CSV for the a2 comparison.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Office size used to split the initial counts.
    #[arg(long, default_value_t = 20)]
    agents: usize,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long = "batch")]
    batch: PathBuf,
    /// Upper end of the y axis.
    #[arg(long, default_value_t = 20)]
    agents: usize,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn parse_experiment(s: &str) -> Result<ExperimentId, String> {
    s.parse().map_err(|e: gabm::experiments::UnknownExperiment| e.to_string())
}

/// Parses and validates `argv`, including the program name.
pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    match cli.command {
        Sub::Run(sim) => sim_config(Command::Run, sim, None, None),
        Sub::Batch(b) => sim_config(
            Command::Batch,
            b.sim,
            Some(b.iterations as usize),
            Some(b.parallelism as usize),
        ),
        Sub::Analyze(a) => {
            match (a.mode, &a.base) {
                (AnalysisMode::A2, None) => return Err(invalid("--mode a2 needs --base <csv>")),
                (AnalysisMode::A1, Some(_)) => return Err(invalid("--base only applies to --mode a2")),
                _ => {}
            }
            if a.agents < 2 {
                return Err(invalid("--agents must be at least 2"));
            }
            Ok(CliConfig {
                command: Command::Analyze,
                experiment: None,
                mode: Some(a.mode),
                n_agents: a.agents,
                overrides: Overrides::default(),
                paths: Paths {
                    out: a.out,
                    batches: a.batches,
                    base: a.base,
                    cache: None,
                },
            })
        }
        Sub::Plot(p) => {
            if p.agents == 0 {
                return Err(invalid("--agents must be positive"));
            }
            Ok(CliConfig {
                command: Command::Plot,
                experiment: None,
                mode: None,
                n_agents: p.agents,
                overrides: Overrides::default(),
                paths: Paths {
                    out: p.out,
                    batches: vec![p.batch],
                    ..Paths::default()
                },
            })
        }
    }
}

fn invalid(msg: &str) -> UsageError {
    UsageError::Invalid(msg.to_string())
}

fn sim_config(
    command: Command,
    sim: SimArgs,
    iterations: Option<usize>,
    parallelism: Option<usize>,
) -> Result<CliConfig, UsageError> {
    match (sim.backend, sim.fallback) {
        (BackendChoice::Replay, _) if sim.cache.is_none() => {
            return Err(invalid("--backend replay needs --cache <path>"))
        }
        (BackendChoice::Replay, Some(BackendChoice::Replay)) => {
            return Err(invalid("--fallback must be live or scripted"))
        }
        (BackendChoice::Live | BackendChoice::Scripted, Some(_)) => {
            return Err(invalid("--fallback only applies to --backend replay"))
        }
        _ => {}
    }
    if sim.cache.is_some() && sim.backend != BackendChoice::Replay {
        return Err(invalid("--cache only applies to --backend replay"));
    }
    if sim.model.is_none() && sim.backend != BackendChoice::Scripted {
        return Err(invalid("--model is required unless --backend scripted"));
    }
    if let Some(t) = sim.temperature {
        if !t.is_finite() || t < 0.0 {
            return Err(invalid("--temperature must be a non-negative number"));
        }
    }
    Ok(CliConfig {
        command,
        experiment: Some(sim.experiment),
        mode: None,
        n_agents: gabm::domain::DEFAULT_AGENTS,
        overrides: Overrides {
            temperature: sim.temperature,
            iterations,
            parallelism,
            seed: Some(sim.seed),
            backend: Some(sim.backend),
            fallback: sim.fallback,
            model_id: sim.model,
            oracle_seed: sim.oracle_seed,
        },
        paths: Paths {
            out: sim.out,
            cache: sim.cache,
            ..Paths::default()
        },
    })
}
