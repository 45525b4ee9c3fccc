//! Deterministic stand-in for a language model, used for tests and offline
//! batches.
//!
//! The oracle reads the agent's name, conformity tier, own prior color and the
//! coworker count back out of a prompt built by [`crate::prompt::build_prompt`].
//! It follows yesterday's majority with probability [`follow_probability`]
//! and otherwise picks the minority color; on an exact tie it keeps its own
//! prior color. The uniform draw comes from ChaCha8 seeded with
//! SHA-256(seed, SHA-256(name), day), so a reply depends only on
//! `(prompt, seed)` and never on call order.

use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use super::LlmError;
use crate::domain::{AgentPersona, ConformityTier, ShirtColor};

static PERSONA: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^You are ([^\n]+?)\.(?: You are a ([^\n]+) person\.)?$").unwrap()
});
static OWN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^Yesterday on day (\d+), you wore a (blue|green) shirt\.$").unwrap()
});
static COWORKERS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^Yesterday on day (\d+), (\d+) of (\d+) wore blue shirts\.$").unwrap()
});

/// Probability that an agent of the given tier follows yesterday's majority.
pub fn follow_probability(tier: Option<ConformityTier>) -> f64 {
    match tier {
        Some(ConformityTier::ExtremelyConformist) => 1.0,
        Some(ConformityTier::HighlyConformist) => 0.9,
        Some(ConformityTier::Conformist) => 0.75,
        Some(ConformityTier::LowConformist) => 0.35,
        Some(ConformityTier::NonConformist) => 0.05,
        None => 0.5,
    }
}

/// The oracle's uniform draw in [0, 1) for one agent on one decision day.
pub fn oracle_draw(seed: u64, agent_name: &str, day: usize) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(Sha256::digest(agent_name.as_bytes()));
    hasher.update((day as u64).to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest).random()
}

/// Fields the oracle recovers from a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OraclePrompt {
    pub agent_name: String,
    pub tier: Option<ConformityTier>,
    pub day: usize,
    pub own_prior_color: ShirtColor,
    pub prior_blue_count: usize,
    pub n_agents: usize,
}

pub fn parse_oracle_prompt(prompt: &str) -> Result<OraclePrompt, LlmError> {
    let missing = |what: &str| LlmError::OracleParse(format!("no {what} line"));
    let persona = PERSONA.captures(prompt).ok_or_else(|| missing("persona"))?;
    let own = OWN.captures(prompt).ok_or_else(|| missing("own-color"))?;
    let coworkers = COWORKERS.captures(prompt).ok_or_else(|| missing("coworker"))?;
    let number = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| LlmError::OracleParse(format!("bad number {s:?}: {e}")))
    };
    let yesterday = number(&coworkers[1])?;
    if number(&own[1])? != yesterday {
        return Err(LlmError::OracleParse("own-color and coworker days differ".into()));
    }
    let prior_blue_count = number(&coworkers[2])?;
    let n_agents = number(&coworkers[3])?;
    if prior_blue_count > n_agents {
        return Err(LlmError::OracleParse(format!(
            "{prior_blue_count} of {n_agents} is not a valid count"
        )));
    }
    let agent_name = persona[1].to_string();
    let tier = persona
        .get(2)
        .and_then(|t| AgentPersona::from_trait_list("", t.as_str()).conformity_tier);
    let own_prior_color = own[2].parse().map_err(LlmError::OracleParse)?;
    Ok(OraclePrompt {
        agent_name,
        tier,
        day: yesterday + 1,
        own_prior_color,
        prior_blue_count,
        n_agents,
    })
}

/// Produces a one-sentence reasoning followed by a `Response:` line.
pub fn scripted_reply(prompt: &str, seed: u64) -> Result<String, LlmError> {
    let p = parse_oracle_prompt(prompt)?;
    let blue = p.prior_blue_count;
    let n = p.n_agents;
    let counts = format!("{blue} of {n} coworkers wore blue yesterday");
    let (color, reasoning) = if 2 * blue == n {
        (
            p.own_prior_color,
            format!("Since {counts}, the office is evenly split, so I will keep wearing {}.", p.own_prior_color),
        )
    } else {
        let majority = if 2 * blue > n {
            ShirtColor::Blue
        } else {
            ShirtColor::Green
        };
        let draw = oracle_draw(seed, &p.agent_name, p.day);
        if draw < follow_probability(p.tier) {
            (
                majority,
                format!("Since {counts}, I will wear {majority} to fit in with the majority."),
            )
        } else {
            let minority = majority.other();
            (
                minority,
                format!("Since {counts}, I will wear {minority} to stand out from the majority."),
            )
        }
    };
    Ok(format!("{reasoning}\nResponse: {color}"))
}
