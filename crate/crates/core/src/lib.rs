//! Generative agent-based model of shirt-color norm diffusion.
//!
//! Twenty office workers each pick a blue or green shirt every day. Each
//! decision comes from a language model prompted with the agent's persona,
//! its own color yesterday and yesterday's office-wide blue count.
//!
//! - [`domain`]: colors, personas, name sets and the choice matrix
//! - [`prompt`]: prompt assembly and reply parsing
//! - [`llm`]: live, scripted and record/replay completion backends
//! - [`engine`]: the day-by-day simulation loop
//! - [`experiments`]: the twelve experiment conditions and the batch runner
//! - [`stats`]: least squares and the endpoint regressions

pub mod domain;
pub mod engine;
pub mod experiments;
pub mod llm;
pub mod prompt;
pub mod stats;

pub use domain::{AgentPersona, ConformityTier, NameSet, PersonaMode, ShirtColor, WorldState};
pub use engine::{run_simulation, run_simulation_with, EngineError, RunConfig, RunResult};
pub use experiments::{get_experiment, run_batch, BatchOptions, BatchResult, ExperimentId};
pub use llm::{BackendKind, CompletionRequest, LlmClient, LlmError, RetryPolicy};
