//! Registry of the twelve experiment conditions and the multi-run batch
//! orchestrator.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{NameSet, PersonaMode};
use crate::engine::{run_simulation_with, EngineError, RunConfig, RunResult};
use crate::llm::{BackendKind, LlmClient, RetryPolicy};
use crate::prompt::{sequence_for_experiment, PromptSequence};

pub const DEFAULT_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
    E9,
    E10,
    E11,
    E12,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 12] = [
        ExperimentId::E1,
        ExperimentId::E2,
        ExperimentId::E3,
        ExperimentId::E4,
        ExperimentId::E5,
        ExperimentId::E6,
        ExperimentId::E7,
        ExperimentId::E8,
        ExperimentId::E9,
        ExperimentId::E10,
        ExperimentId::E11,
        ExperimentId::E12,
    ];

    pub fn number(self) -> usize {
        self as usize + 1
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.number())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown experiment {0:?} (expected E1..E12)")]
pub struct UnknownExperiment(pub String);

impl FromStr for ExperimentId {
    type Err = UnknownExperiment;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('E')
            .or_else(|| s.strip_prefix('e'))
            .ok_or_else(|| UnknownExperiment(s.to_string()))?;
        match digits.parse::<usize>() {
            Ok(n @ 1..=12) if !digits.starts_with('0') => Ok(Self::ALL[n - 1]),
            _ => Err(UnknownExperiment(s.to_string())),
        }
    }
}

/// One experiment condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub title: &'static str,
    /// Date the condition was originally run (model drift makes this relevant).
    pub original_date: &'static str,
    pub persona_mode: PersonaMode,
    pub attractor: bool,
    pub temperature: f64,
    pub sequence: PromptSequence,
    pub name_set: &'static str,
    pub p_blue_initial: f64,
    pub iterations: usize,
}

impl ExperimentSpec {
    /// A run configuration for this condition.
    pub fn run_config(&self, model_id: &str, backend: BackendKind, seed: u64) -> RunConfig {
        let name_set = NameSet::by_label(self.name_set).expect("registry name sets exist");
        RunConfig {
            n_agents: name_set.len(),
            p_blue_initial: self.p_blue_initial,
            persona_mode: self.persona_mode,
            name_set,
            attractor: self.attractor,
            temperature: self.temperature,
            sequence: self.sequence,
            seed,
            ..RunConfig::new(model_id, backend)
        }
    }
}

pub fn get_experiment(id: ExperimentId) -> ExperimentSpec {
    use ExperimentId::*;
    let base = ExperimentSpec {
        id,
        title: "Base run",
        original_date: "2023-08-13",
        persona_mode: PersonaMode::ConformityOnly,
        attractor: false,
        temperature: 0.0,
        sequence: sequence_for_experiment(id),
        name_set: "base",
        p_blue_initial: 0.5,
        iterations: DEFAULT_ITERATIONS,
    };
    match id {
        E1 => base,
        E2 => ExperimentSpec {
            title: "No personality traits",
            original_date: "2023-08-14",
            persona_mode: PersonaMode::NoTraits,
            ..base
        },
        E3 => ExperimentSpec {
            title: "Extensive personality traits",
            original_date: "2023-08-14",
            persona_mode: PersonaMode::Extended,
            ..base
        },
        E4 => ExperimentSpec {
            title: "Less relevant traits",
            original_date: "2023-08-14",
            persona_mode: PersonaMode::ExtrasOnly,
            ..base
        },
        E5 => ExperimentSpec {
            title: "Extra attractor",
            original_date: "2023-08-18",
            attractor: true,
            p_blue_initial: 0.0,
            ..base
        },
        E6 => ExperimentSpec {
            title: "Extensive traits and extra attractor",
            original_date: "2023-08-15",
            persona_mode: PersonaMode::Extended,
            attractor: true,
            p_blue_initial: 0.0,
            ..base
        },
        E7 => ExperimentSpec {
            title: "Temperature 0.25",
            original_date: "2023-08-15",
            temperature: 0.25,
            ..base
        },
        E8 => ExperimentSpec {
            title: "Temperature 0.5",
            original_date: "2023-08-15",
            temperature: 0.5,
            ..base
        },
        E9 => ExperimentSpec {
            title: "Own color next to the decision",
            original_date: "2023-09-02",
            ..base
        },
        E10 => ExperimentSpec {
            title: "Coworker counts first",
            original_date: "2023-09-02",
            ..base
        },
        E11 => ExperimentSpec {
            title: "Farsi names",
            original_date: "2023-09-02",
            name_set: "farsi",
            ..base
        },
        E12 => ExperimentSpec {
            title: "Base run (repeat)",
            original_date: "2023-09-02",
            ..base
        },
    }
}

/// Per-run seed: the first eight bytes (little-endian) of
/// SHA-256(master_seed LE || run_index LE).
pub fn derive_run_seed(master_seed: u64, run_index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((run_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRun {
    pub run_id: usize,
    pub seed: u64,
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub experiment: ExperimentId,
    /// Successful runs, sorted by run id.
    pub runs: Vec<BatchRun>,
    pub failures: Vec<RunFailure>,
}

/// One run's endpoints: blue count on day 0 and on the last day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoints {
    pub run_id: usize,
    pub b0: usize,
    pub b_final: usize,
}

impl BatchResult {
    pub fn failure_count(&self) -> usize {
        self.failures.len()
    }

    pub fn per_run_blue_series(&self) -> Vec<(usize, Vec<usize>)> {
        self.runs
            .iter()
            .map(|r| (r.run_id, r.result.blue_series.clone()))
            .collect()
    }

    /// `experiment,run_id,seed,b0,...,bN`, one row per successful run.
    pub fn to_csv(&self) -> String {
        let n_days = self
            .runs
            .first()
            .map_or(crate::domain::DEFAULT_DAYS, |r| r.result.blue_series.len() - 1);
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["experiment".to_string(), "run_id".into(), "seed".into()];
        header.extend((0..=n_days).map(|d| format!("b{d}")));
        writer.write_record(&header).expect("in-memory write");
        for run in &self.runs {
            let mut row = vec![
                self.experiment.to_string(),
                run.run_id.to_string(),
                run.seed.to_string(),
            ];
            row.extend(run.result.blue_series.iter().map(usize::to_string));
            writer.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }
}

pub fn extract_endpoints(batch: &BatchResult) -> Vec<Endpoints> {
    batch
        .runs
        .iter()
        .map(|r| Endpoints {
            run_id: r.run_id,
            b0: r.result.blue_series[0],
            b_final: *r.result.blue_series.last().expect("non-empty series"),
        })
        .collect()
}

/// A row of a batch CSV read back from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRow {
    pub experiment: String,
    pub run_id: usize,
    pub seed: u64,
    pub blue_series: Vec<usize>,
}

impl BatchRow {
    pub fn endpoints(&self) -> Endpoints {
        Endpoints {
            run_id: self.run_id,
            b0: self.blue_series[0],
            b_final: *self.blue_series.last().expect("non-empty series"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatchError {
    #[error("iterations and parallelism must both be at least 1")]
    InvalidOptions,
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("all {failures} runs failed; first error: {first}")]
    BatchFailed { failures: usize, first: EngineError },
    #[error("malformed batch CSV: {0}")]
    Csv(String),
}

pub fn read_batch_csv(text: &str) -> Result<Vec<BatchRow>, BatchError> {
    let bad = |m: String| BatchError::Csv(m);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let fixed = ["experiment", "run_id", "seed"];
    if headers.len() < 4 || headers.iter().take(3).ne(fixed) {
        return Err(bad("header must start with experiment,run_id,seed,b0".into()));
    }
    for (d, h) in headers.iter().skip(3).enumerate() {
        if h != format!("b{d}") {
            return Err(bad(format!("unexpected column {h:?}")));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let num = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("{s:?}: {e}")));
        rows.push(BatchRow {
            experiment: record[0].to_string(),
            run_id: num(&record[1])? as usize,
            seed: num(&record[2])?,
            blue_series: record
                .iter()
                .skip(3)
                .map(|c| num(c).map(|v| v as usize))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

/// Settings shared by every run of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub iterations: usize,
    pub parallelism: usize,
    pub master_seed: u64,
    pub model_id: String,
    pub backend: BackendKind,
    pub retry: RetryPolicy,
    /// Overrides the experiment's temperature when set.
    pub temperature: Option<f64>,
}

impl BatchOptions {
    pub fn new(model_id: impl Into<String>, backend: BackendKind, master_seed: u64) -> Self {
        BatchOptions {
            iterations: DEFAULT_ITERATIONS,
            parallelism: 1,
            master_seed,
            model_id: model_id.into(),
            backend,
            retry: RetryPolicy::default(),
            temperature: None,
        }
    }
}

/// Runs `opts.iterations` independent simulations of experiment `id`.
pub fn run_batch(
    id: ExperimentId,
    opts: &BatchOptions,
    client: &LlmClient,
) -> Result<BatchResult, BatchError> {
    let mut template = get_experiment(id).run_config(&opts.model_id, opts.backend.clone(), 0);
    template.retry = opts.retry.clone();
    if let Some(t) = opts.temperature {
        template.temperature = t;
    }
    run_batch_with(id, &template, opts.iterations, opts.parallelism, opts.master_seed, client)
}

/// Runs `iterations` copies of `template`, each with its derived seed, on a
/// pool of `parallelism` worker threads.
pub fn run_batch_with(
    experiment: ExperimentId,
    template: &RunConfig,
    iterations: usize,
    parallelism: usize,
    master_seed: u64,
    client: &LlmClient,
) -> Result<BatchResult, BatchError> {
    if iterations == 0 || parallelism == 0 {
        return Err(BatchError::InvalidOptions);
    }
    template
        .validate()
        .map_err(|e| BatchError::Config(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| BatchError::Config(e.to_string()))?;
    let outcomes: Vec<(usize, u64, Result<RunResult, EngineError>)> = pool.install(|| {
        (0..iterations)
            .into_par_iter()
            .map(|run_id| {
                let seed = derive_run_seed(master_seed, run_id);
                let cfg = RunConfig {
                    seed,
                    ..template.clone()
                };
                (run_id, seed, run_simulation_with(&cfg, client))
            })
            .collect()
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (run_id, seed, outcome) in outcomes {
        match outcome {
            Ok(result) => runs.push(BatchRun {
                run_id,
                seed,
                result,
            }),
            Err(e) => {
                failures.push(RunFailure {
                    run_id,
                    seed,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if runs.is_empty() {
        return Err(BatchError::BatchFailed {
            failures: failures.len(),
            first: first_error.expect("at least one failure"),
        });
    }
    Ok(BatchResult {
        experiment,
        runs,
        failures,
    })
}
