use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gabm::engine::{run_simulation_with, EngineError};
use gabm::experiments::{
    get_experiment, read_batch_csv, run_batch, BatchError, BatchOptions, BatchRow, ExperimentId,
};
use gabm::stats::{
    endpoint_rows, fit_comparison, fit_path_dependence, render_table, report_json, RegressionReport,
    ReportColumn,
};
use gabm::{BackendKind, LlmClient, LlmError, RetryPolicy};
use serde_json::json;
use thiserror::Error;

use crate::args::{AnalysisMode, BackendChoice, CliConfig, Command, UsageError};
use crate::plot::render_trajectories;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUN: i32 = 2;
pub const EXIT_ANALYSIS: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error("{0}")]
    Run(String),
    #[error("{0}")]
    Analysis(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(u) if u.is_informational() => EXIT_OK,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(_) => EXIT_RUN,
            CliError::Analysis(_) => EXIT_ANALYSIS,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

fn is_backend_failure(e: &LlmError) -> bool {
    matches!(
        e,
        LlmError::Transport { .. } | LlmError::Auth(_) | LlmError::CacheMiss(_)
    )
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        if is_backend_failure(&e) {
            CliError::Backend(e.to_string())
        } else {
            CliError::Run(e.to_string())
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e.backend_error() {
            Some(b) if is_backend_failure(b) => CliError::Backend(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> Self {
        match &e {
            BatchError::BatchFailed { first, .. }
                if first.backend_error().is_some_and(is_backend_failure) =>
            {
                CliError::Backend(e.to_string())
            }
            _ => CliError::Run(e.to_string()),
        }
    }
}

/// Dispatches a parsed command line. Human-readable output goes to `out`.
pub fn execute(cfg: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    match cfg.command {
        Command::Run => run(cfg, out),
        Command::Batch => batch(cfg, out),
        Command::Analyze => analyze(cfg, out),
        Command::Plot => plot(cfg, out),
    }
}

fn backend_kind(cfg: &CliConfig) -> Result<BackendKind, CliError> {
    let simple = |choice: BackendChoice| -> Result<BackendKind, CliError> {
        match choice {
            BackendChoice::Scripted => Ok(BackendKind::Scripted {
                seed: cfg.overrides.oracle_seed,
            }),
            BackendChoice::Live => {
                BackendKind::live_from_env().map_err(|e| CliError::Backend(e.to_string()))
            }
            BackendChoice::Replay => unreachable!("rejected by parse_args"),
        }
    };
    match cfg.overrides.backend.unwrap_or(BackendChoice::Scripted) {
        BackendChoice::Replay => Ok(BackendKind::Replay {
            cache_path: cfg.paths.cache.clone().expect("checked by parse_args"),
            fallback: cfg.overrides.fallback.map(simple).transpose()?.map(Box::new),
        }),
        other => simple(other),
    }
}

fn model_id(cfg: &CliConfig) -> String {
    cfg.overrides
        .model_id
        .clone()
        .unwrap_or_else(|| "scripted".to_string())
}

fn experiment(cfg: &CliConfig) -> ExperimentId {
    cfg.experiment.expect("simulation commands carry an experiment")
}

fn write_file(path: &Path, contents: &str, fail: fn(String) -> CliError) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| fail(format!("cannot write {}: {e}", path.display())))
}

fn create_out(dir: &Path, fail: fn(String) -> CliError) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| fail(format!("cannot create {}: {e}", dir.display())))
}

fn stem(id: ExperimentId) -> String {
    id.to_string().to_lowercase()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn say(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::Run(format!("cannot write output: {e}")))
}

fn run(cfg: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let id = experiment(cfg);
    let seed = cfg.overrides.seed.unwrap_or(0);
    let kind = backend_kind(cfg)?;
    let mut run_cfg = get_experiment(id).run_config(&model_id(cfg), kind.clone(), seed);
    if let Some(t) = cfg.overrides.temperature {
        run_cfg.temperature = t;
    }
    let client = LlmClient::new(&kind, &run_cfg.retry)?;
    let result = run_simulation_with(&run_cfg, &client)?;

    say(out, &result.transcript())?;
    create_out(&cfg.paths.out, CliError::Run)?;
    let run_id = format!("{}-seed{seed}", stem(id));
    let matrix = cfg.paths.out.join(format!("{run_id}_matrix.csv"));
    let log = cfg.paths.out.join(format!("{run_id}_reasoning.jsonl"));
    write_file(&matrix, &result.matrix.to_matrix_csv(), CliError::Run)?;
    write_file(&log, &result.reasoning_log_jsonl(&run_id), CliError::Run)?;
    say(out, &format!("wrote {} and {}", matrix.display(), log.display()))
}

fn batch(cfg: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let id = experiment(cfg);
    let spec = get_experiment(id);
    let kind = backend_kind(cfg)?;
    let opts = BatchOptions {
        iterations: cfg.overrides.iterations.unwrap_or(spec.iterations),
        parallelism: cfg.overrides.parallelism.unwrap_or(1),
        temperature: cfg.overrides.temperature,
        ..BatchOptions::new(model_id(cfg), kind.clone(), cfg.overrides.seed.unwrap_or(0))
    };
    let client = LlmClient::new(&kind, &RetryPolicy::default())?;
    let result = run_batch(id, &opts, &client)?;

    create_out(&cfg.paths.out, CliError::Run)?;
    let csv_path = cfg.paths.out.join(format!("{}_batch.csv", stem(id)));
    let meta_path = cfg.paths.out.join(format!("{}_batch.json", stem(id)));
    write_file(&csv_path, &result.to_csv(), CliError::Run)?;
    let failures: Vec<_> = result
        .failures
        .iter()
        .map(|f| json!({"run_id": f.run_id, "seed": f.seed, "error": f.error}))
        .collect();
    let meta = json!({
        "experiment": id.to_string(),
        "title": spec.title,
        "original_date": spec.original_date,
        "recorded_at_unix": unix_now(),
        "model_id": opts.model_id,
        "backend": kind,
        "temperature": opts.temperature.unwrap_or(spec.temperature),
        "master_seed": opts.master_seed,
        "iterations": opts.iterations,
        "parallelism": opts.parallelism,
        "completed": result.runs.len(),
        "failures": failures,
    });
    let meta_text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write_file(&meta_path, &(meta_text + "\n"), CliError::Run)?;
    say(
        out,
        &format!(
            "{id}: {} runs completed, {} failed; wrote {}",
            result.runs.len(),
            result.failure_count(),
            csv_path.display()
        ),
    )
}

fn load_batch(path: &Path) -> Result<Vec<BatchRow>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Analysis(format!("cannot read {}: {e}", path.display())))?;
    let rows = read_batch_csv(&text)
        .map_err(|e| CliError::Analysis(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Analysis(format!("{} has no runs", path.display())));
    }
    Ok(rows)
}

fn label(path: &Path, rows: &[BatchRow]) -> String {
    rows.first()
        .map(|r| r.experiment.clone())
        .filter(|e| !e.is_empty())
        .unwrap_or_else(|| {
            path.file_stem()
                .map_or_else(|| "batch".into(), |s| s.to_string_lossy().into_owned())
        })
}

fn analyze(cfg: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let mode = cfg.mode.unwrap_or(AnalysisMode::A1);
    let half = cfg.n_agents / 2;
    let rows_of = |path: &PathBuf, is_exp: bool| -> Result<(String, Vec<_>), CliError> {
        let batch = load_batch(path)?;
        let endpoints: Vec<_> = batch.iter().map(BatchRow::endpoints).collect();
        Ok((label(path, &batch), endpoint_rows(&endpoints, half, is_exp)))
    };
    let base = match (&cfg.paths.base, mode) {
        (Some(path), AnalysisMode::A2) => Some(rows_of(path, false)?.1),
        _ => None,
    };
    let mut fits: Vec<(String, RegressionReport)> = Vec::new();
    for path in &cfg.paths.batches {
        let (name, rows) = rows_of(path, true)?;
        let fit = match &base {
            Some(base) => fit_comparison(&rows, base),
            None => fit_path_dependence(&rows),
        }
        .map_err(|e| CliError::Analysis(format!("{name}: {e}")))?;
        fits.push((name, fit));
    }

    let (title, file) = match mode {
        AnalysisMode::A1 => ("Final blue count on the initial split (OLS)", "a1_table"),
        AnalysisMode::A2 => ("Distance from an even split, experiment vs base (OLS)", "a2_table"),
    };
    let columns: Vec<ReportColumn<'_>> = fits
        .iter()
        .map(|(label, report)| ReportColumn {
            label: label.clone(),
            report,
        })
        .collect();
    let table = render_table(title, &columns);
    let json: serde_json::Map<String, serde_json::Value> = fits
        .iter()
        .map(|(label, report)| (label.clone(), report_json(report)))
        .collect();

    create_out(&cfg.paths.out, CliError::Analysis)?;
    let txt = cfg.paths.out.join(format!("{file}.txt"));
    let js = cfg.paths.out.join(format!("{file}.json"));
    write_file(&txt, &table, CliError::Analysis)?;
    let json_text = serde_json::to_string_pretty(&json).expect("report serializes");
    write_file(&js, &(json_text + "\n"), CliError::Analysis)?;
    say(out, table.trim_end())
}

fn plot(cfg: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let path = &cfg.paths.batches[0];
    let rows = load_batch(path)?;
    let trajectories: Vec<Vec<usize>> = rows.iter().map(|r| r.blue_series.clone()).collect();
    let name = label(path, &rows);
    let title = format!("{name}: blue shirts per day, {} runs", rows.len());
    create_out(&cfg.paths.out, CliError::Analysis)?;
    let file_stem = path
        .file_stem()
        .map_or_else(|| "batch".into(), |s| s.to_string_lossy().into_owned());
    let svg = cfg.paths.out.join(format!("{file_stem}.svg"));
    render_trajectories(&title, &trajectories, cfg.n_agents, &svg)
        .map_err(|e| CliError::Analysis(e.to_string()))?;
    say(out, &format!("wrote {}", svg.display()))
}
