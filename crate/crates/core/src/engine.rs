//! The simulation loop: initialize the world, then for each decision day ask
//! every agent for a color given yesterday's state.
//!
//! Updates are synchronous. Every agent on day `d` sees the column for day
//! `d - 1` only, so agent queries within a day are issued in parallel and the
//! results are committed in agent-index order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{
    init_world, persona_list, AgentPersona, DomainError, NameSet, PersonaMode, ShirtColor,
    WorldState, DEFAULT_AGENTS, DEFAULT_DAYS,
};
use crate::llm::{BackendKind, CompletionRequest, LlmClient, LlmError, RetryPolicy, DEFAULT_MAX_REPLY_TOKENS};
use crate::prompt::{build_prompt, parse_decision, Decision, ParseError, PromptContext, PromptSequence};

pub const DEFAULT_AMBIGUOUS_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_agents: usize,
    pub n_days: usize,
    pub p_blue_initial: f64,
    pub persona_mode: PersonaMode,
    /// Replaces the personas derived from `persona_mode` when set.
    pub personas: Option<Vec<AgentPersona>>,
    pub name_set: NameSet,
    pub attractor: bool,
    pub temperature: f64,
    pub sequence: PromptSequence,
    pub seed: u64,
    pub model_id: String,
    pub max_reply_tokens: u32,
    pub backend: BackendKind,
    pub retry: RetryPolicy,
    pub ambiguous_reply_retries: u32,
}

impl RunConfig {
    /// Twenty base-named agents, seven days, conformity-only personas.
    pub fn new(model_id: impl Into<String>, backend: BackendKind) -> Self {
        RunConfig {
            n_agents: DEFAULT_AGENTS,
            n_days: DEFAULT_DAYS,
            p_blue_initial: 0.5,
            persona_mode: PersonaMode::ConformityOnly,
            personas: None,
            name_set: NameSet::base(),
            attractor: false,
            temperature: 0.0,
            sequence: PromptSequence::Base,
            seed: 0,
            model_id: model_id.into(),
            max_reply_tokens: DEFAULT_MAX_REPLY_TOKENS,
            backend,
            retry: RetryPolicy::default(),
            ambiguous_reply_retries: DEFAULT_AMBIGUOUS_RETRIES,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |m: String| Err(EngineError::Config(m));
        if self.n_days < 1 {
            return fail("n_days must be at least 1".into());
        }
        if self.n_agents < 1 {
            return fail("n_agents must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p_blue_initial) {
            return fail(format!("p_blue_initial {} is outside [0, 1]", self.p_blue_initial));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return fail(format!("temperature {} is outside [0, 2]", self.temperature));
        }
        if self.model_id.trim().is_empty() {
            return fail("model_id is required".into());
        }
        let people = self.personas.as_ref().map_or(self.name_set.len(), Vec::len);
        if people != self.n_agents {
            return fail(format!(
                "{} agents configured but {people} names/personas supplied",
                self.n_agents
            ));
        }
        Ok(())
    }

    pub fn resolved_personas(&self) -> Vec<AgentPersona> {
        self.personas
            .clone()
            .unwrap_or_else(|| persona_list(self.persona_mode, &self.name_set))
    }

    /// Re-asks allowed after an ambiguous reply. At temperature 0 a repeat is
    /// expected to return the same text, so at most one re-ask is made.
    fn effective_ambiguous_retries(&self) -> u32 {
        if self.temperature == 0.0 {
            self.ambiguous_reply_retries.min(1)
        } else {
            self.ambiguous_reply_retries
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FailureCause {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("reply stayed ambiguous after {attempts} attempt(s)")]
    Ambiguous { attempts: u32 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("run failed on day {day} for agent {agent}: {cause}")]
    RunFailed {
        day: usize,
        agent: String,
        cause: FailureCause,
    },
}

impl EngineError {
    /// The backend error behind a failed run, if any.
    pub fn backend_error(&self) -> Option<&LlmError> {
        match self {
            EngineError::RunFailed {
                cause: FailureCause::Backend(e),
                ..
            } => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub day: usize,
    pub agent_name: String,
    pub reasoning: String,
    pub color: ShirtColor,
    pub raw_reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_snapshot: RunConfig,
    pub matrix: WorldState,
    pub blue_series: Vec<usize>,
    pub reasoning_log: Vec<LogEntry>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    run_id: &'a str,
    day: usize,
    agent: &'a str,
    reasoning: &'a str,
    choice: ShirtColor,
    raw_reply_digest: String,
}

impl RunResult {
    /// Wraps a completed matrix, deriving the blue series from it.
    pub fn from_matrix(config_snapshot: RunConfig, matrix: WorldState, reasoning_log: Vec<LogEntry>) -> Self {
        let blue_series = matrix.blue_series();
        RunResult {
            config_snapshot,
            matrix,
            blue_series,
            reasoning_log,
        }
    }

    /// One JSON object per decision; the raw reply is stored as its SHA-256.
    pub fn reasoning_log_jsonl(&self, run_id: &str) -> String {
        let mut out = String::new();
        for entry in &self.reasoning_log {
            let line = LogLine {
                run_id,
                day: entry.day,
                agent: &entry.agent_name,
                reasoning: &entry.reasoning,
                choice: entry.color,
                raw_reply_digest: hex::encode(Sha256::digest(entry.raw_reply.as_bytes())),
            };
            out.push_str(&serde_json::to_string(&line).expect("log line serializes"));
            out.push('\n');
        }
        out
    }

    /// Human-readable reasoning transcript, grouped by day.
    pub fn transcript(&self) -> String {
        let n = self.matrix.n_agents();
        let mut out = String::new();
        let mut current = None;
        for entry in &self.reasoning_log {
            if current != Some(entry.day) {
                current = Some(entry.day);
                let yesterday = entry.day - 1;
                out.push_str(&format!(
                    "Context information: Yesterday on day {yesterday}, {} of {n} wore blue shirts.\n",
                    self.blue_series[yesterday]
                ));
            }
            let reasoning = entry.reasoning.split_whitespace().collect::<Vec<_>>().join(" ");
            out.push_str(&format!("  {}'s reasoning: {reasoning}\n", entry.agent_name));
            out.push_str(&format!("  {}'s response: {}\n", entry.agent_name, entry.color));
        }
        out
    }
}

fn ask(
    client: &LlmClient,
    cfg: &RunConfig,
    ctx: &PromptContext,
) -> Result<Decision, FailureCause> {
    let request = CompletionRequest {
        prompt: build_prompt(ctx),
        temperature: cfg.temperature,
        model_id: cfg.model_id.clone(),
        max_reply_tokens: cfg.max_reply_tokens,
    };
    let attempts = 1 + cfg.effective_ambiguous_retries();
    for _ in 0..attempts {
        let reply = client.complete(&request)?;
        match parse_decision(&reply) {
            Ok(decision) => return Ok(decision),
            Err(ParseError::AmbiguousReply(_)) => continue,
        }
    }
    Err(FailureCause::Ambiguous { attempts })
}

/// Fills column `day` (which must be `current_day + 1`) and returns that day's
/// log entries in agent order.
pub fn step_day(
    world: &mut WorldState,
    day: usize,
    cfg: &RunConfig,
    client: &LlmClient,
) -> Result<Vec<LogEntry>, EngineError> {
    if day != world.current_day() + 1 || day > world.n_days() {
        return Err(EngineError::Domain(DomainError::DayNotWritable {
            day,
            current: world.current_day(),
        }));
    }
    let snapshot: &WorldState = world;
    let prior_blue = snapshot.count_blue(day - 1)?;
    let n_agents = snapshot.n_agents();
    let decisions: Vec<Result<Decision, FailureCause>> = snapshot
        .personas()
        .par_iter()
        .enumerate()
        .map(|(agent, persona)| {
            let ctx = PromptContext {
                agent_name: persona.name.clone(),
                trait_sentence: persona.trait_sentence(),
                day,
                own_prior_color: snapshot.choice(agent, day - 1).expect("filled prior day"),
                prior_blue_count: prior_blue,
                n_agents,
                attractor: cfg.attractor,
                sequence: cfg.sequence,
            };
            ask(client, cfg, &ctx)
        })
        .collect();

    let names: Vec<String> = snapshot.personas().iter().map(|p| p.name.clone()).collect();
    let decisions = decisions
        .into_iter()
        .zip(&names)
        .map(|(d, name)| {
            d.map_err(|cause| EngineError::RunFailed {
                day,
                agent: name.clone(),
                cause,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut log = Vec::with_capacity(n_agents);
    for (agent, (decision, name)) in decisions.into_iter().zip(names).enumerate() {
        world.record_choice(agent, day, decision.color)?;
        log.push(LogEntry {
            day,
            agent_name: name,
            reasoning: decision.reasoning,
            color: decision.color,
            raw_reply: decision.raw_reply,
        });
    }
    Ok(log)
}

/// Runs one simulation with a client shared by the caller.
pub fn run_simulation_with(cfg: &RunConfig, client: &LlmClient) -> Result<RunResult, EngineError> {
    cfg.validate()?;
    let mut world = init_world(
        cfg.n_agents,
        cfg.n_days,
        cfg.p_blue_initial,
        cfg.seed,
        cfg.resolved_personas(),
    )?;
    let mut reasoning_log = Vec::with_capacity(cfg.n_agents * cfg.n_days);
    for day in 1..=cfg.n_days {
        reasoning_log.extend(step_day(&mut world, day, cfg, client)?);
    }
    Ok(RunResult::from_matrix(cfg.clone(), world, reasoning_log))
}

/// Runs one simulation against a client built from `cfg.backend`.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunResult, EngineError> {
    cfg.validate()?;
    let client = LlmClient::new(&cfg.backend, &cfg.retry).map_err(|e| EngineError::RunFailed {
        day: 0,
        agent: String::new(),
        cause: FailureCause::Backend(e),
    })?;
    run_simulation_with(cfg, &client)
}
