//! Per-agent, per-day prompt assembly and reply parsing.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ShirtColor;
use crate::experiments::ExperimentId;

/// Fixed description of the office setting. Authored text: the motives
/// (success, earning more money) are the ones agents cite in their replies.
pub const SETTING_TEXT: &str = "You work in an office where everyone wants to be successful and \
is motivated by earning more money. Each workday you decide which shirt to wear to the office.";

pub const CEO_SENTENCE: &str =
    "Michael, the new CEO, bikes to work everyday, likes coffee, and often wears blue shirts.";
pub const NEIGHBOR_SENTENCE: &str =
    "You note that your neighbor who works in a different company wears green.";
pub const DECISION_SENTENCE: &str =
    "Based on the above context, you need to choose whether to wear blue or green shirt.";

/// Authored output-format instruction; replies are expected to end in a
/// `Response:` line.
pub const FORMAT_TEXT: &str = "First explain your reasoning in a few sentences. Then end your \
answer with a final line that contains only \"Response: \" followed by the color you choose.";

/// Number of trailing characters searched when a reply has no `Response:` line.
pub const FALLBACK_WINDOW: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSequence {
    /// persona, setting, own color, coworkers, [attractor], decision, format
    Base,
    /// persona, setting, coworkers, [attractor], own color, decision, format
    OwnColorNearDecision,
    /// coworkers, persona, setting, own color, [attractor], decision, format
    CoworkerInfoFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Persona,
    Setting,
    OwnHistory,
    Coworkers,
    Attractor,
    Decision,
    Format,
}

impl PromptSequence {
    pub fn order(self, attractor: bool) -> Vec<BlockKind> {
        use BlockKind::*;
        let order: &[BlockKind] = match self {
            PromptSequence::Base => &[Persona, Setting, OwnHistory, Coworkers, Attractor, Decision, Format],
            PromptSequence::OwnColorNearDecision => {
                &[Persona, Setting, Coworkers, Attractor, OwnHistory, Decision, Format]
            }
            PromptSequence::CoworkerInfoFirst => {
                &[Coworkers, Persona, Setting, OwnHistory, Attractor, Decision, Format]
            }
        };
        order
            .iter()
            .copied()
            .filter(|b| attractor || *b != Attractor)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContext {
    pub agent_name: String,
    pub trait_sentence: String,
    /// Decision day, at least 1.
    pub day: usize,
    pub own_prior_color: ShirtColor,
    pub prior_blue_count: usize,
    pub n_agents: usize,
    pub attractor: bool,
    pub sequence: PromptSequence,
}

impl PromptContext {
    fn block(&self, kind: BlockKind) -> String {
        let yesterday = self.day.saturating_sub(1);
        match kind {
            BlockKind::Persona if self.trait_sentence.is_empty() => {
                format!("You are {}.", self.agent_name)
            }
            BlockKind::Persona => format!(
                "You are {}. You are a {} person.",
                self.agent_name, self.trait_sentence
            ),
            BlockKind::Setting => SETTING_TEXT.to_string(),
            BlockKind::OwnHistory => format!(
                "Yesterday on day {yesterday}, you wore a {} shirt.",
                self.own_prior_color
            ),
            BlockKind::Coworkers => format!(
                "Yesterday on day {yesterday}, {} of {} wore blue shirts.",
                self.prior_blue_count, self.n_agents
            ),
            BlockKind::Attractor => format!("{CEO_SENTENCE}\n{NEIGHBOR_SENTENCE}"),
            BlockKind::Decision => DECISION_SENTENCE.to_string(),
            BlockKind::Format => FORMAT_TEXT.to_string(),
        }
    }

    /// The blocks of the prompt in the order given by the context's sequence.
    pub fn blocks(&self) -> Vec<(BlockKind, String)> {
        debug_assert!(self.day >= 1 && self.prior_blue_count <= self.n_agents);
        self.sequence
            .order(self.attractor)
            .into_iter()
            .map(|kind| (kind, self.block(kind)))
            .collect()
    }
}

/// Instantiates the prompt for one agent on one day. Blocks are separated by
/// single newlines.
pub fn build_prompt(ctx: &PromptContext) -> String {
    ctx.blocks()
        .into_iter()
        .map(|(_, text)| text)
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn sequence_for_experiment(exp: ExperimentId) -> PromptSequence {
    match exp {
        ExperimentId::E9 => PromptSequence::OwnColorNearDecision,
        ExperimentId::E10 => PromptSequence::CoworkerInfoFirst,
        _ => PromptSequence::Base,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub reasoning: String,
    pub color: ShirtColor,
    pub raw_reply: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("reply names no single shirt color: {0:?}")]
    AmbiguousReply(String),
}

static RESPONSE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^response:[ \t]*(blue|green)\b").unwrap());
static BLUE_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bblue\b").unwrap());
static GREEN_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bgreen\b").unwrap());

/// Whole-word, case-insensitive occurrences of "blue" and "green".
pub fn color_word_counts(text: &str) -> (usize, usize) {
    (
        BLUE_WORD.find_iter(text).count(),
        GREEN_WORD.find_iter(text).count(),
    )
}

/// Splits a model reply into reasoning and color.
///
/// The last line beginning with `Response: blue|green` (any case) decides the
/// color and everything before it is the reasoning. Without such a line, the
/// final [`FALLBACK_WINDOW`] characters must mention exactly one of the two
/// colors; the whole reply is then kept as reasoning.
pub fn parse_decision(reply: &str) -> Result<Decision, ParseError> {
    let mut offset = 0;
    let mut found = None;
    for line in reply.split_inclusive('\n') {
        if let Some(caps) = RESPONSE_LINE.captures(line) {
            found = Some((offset, caps[1].to_ascii_lowercase()));
        }
        offset += line.len();
    }
    if let Some((start, word)) = found {
        let before = &reply[..start];
        let reasoning = before
            .strip_suffix('\n')
            .map(|r| r.strip_suffix('\r').unwrap_or(r))
            .unwrap_or(before);
        let color = if word == "blue" {
            ShirtColor::Blue
        } else {
            ShirtColor::Green
        };
        return Ok(Decision {
            reasoning: reasoning.to_string(),
            color,
            raw_reply: reply.to_string(),
        });
    }

    let tail_start = reply
        .char_indices()
        .rev()
        .nth(FALLBACK_WINDOW - 1)
        .map(|(i, _)| i)
        .unwrap_or(0);
    let tail = &reply[tail_start..];
    let color = match (BLUE_WORD.is_match(tail), GREEN_WORD.is_match(tail)) {
        (true, false) => ShirtColor::Blue,
        (false, true) => ShirtColor::Green,
        _ => return Err(ParseError::AmbiguousReply(reply.to_string())),
    };
    Ok(Decision {
        reasoning: reply.trim().to_string(),
        color,
        raw_reply: reply.to_string(),
    })
}
