//! Core data types: shirt colors, personas, name sets and the per-agent,
//! per-day choice matrix.
//!
//! # Initial assignment
//!
//! Day 0 is filled by [`init_world`] using a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`). Exactly one uniform
//! `f64` is drawn per agent, in agent-index order; the draw is the top 53
//! bits of `next_u64()` scaled by 2^-53. An agent starts in blue iff its
//! draw is strictly less than `p_blue_initial`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_AGENTS: usize = 20;
pub const DEFAULT_DAYS: usize = 7;

/// The 20 agent names in the row order of the published choice matrix.
pub const BASE_NAMES: [&str; 20] = [
    "Adrian",
    "Mark",
    "Greg",
    "John",
    "Peter",
    "Liz",
    "Rosa",
    "Patricia",
    "Julia",
    "Kathy",
    "William",
    "Benjamin",
    "Mike",
    "David",
    "George",
    "Emma",
    "Olivia",
    "Elizabeth",
    "Isabella",
    "Mia",
];

/// Extended trait list: conformity tier followed by three Big Five style traits.
pub const EXTENDED_TRAITS: [&str; 20] = [
    "extremely conformist, curious, friendly, and sensitive",
    "highly conformist, cautious, friendly, and confident",
    "conformist, curious, critical, and confident",
    "low conformist, cautious, critical, and sensitive",
    "non-conformist, curious, friendly, and sensitive",
    "extremely conformist, cautious, friendly, and confident",
    "highly conformist, curious, critical, and confident",
    "conformist, cautious, critical, and sensitive",
    "low conformist, curious, friendly, and sensitive",
    "non-conformist, cautious, critical, and confident",
    "highly conformist, curious, friendly, and confident",
    "conformist, cautious, critical, and sensitive",
    "conformist, curious, critical, and sensitive",
    "conformist, cautious, friendly, and confident",
    "low conformist, curious, critical, and confident",
    "highly conformist, cautious, friendly, and sensitive",
    "conformist, curious, friendly, and sensitive",
    "conformist, cautious, friendly, and confident",
    "conformist, curious, critical, and confident",
    "low conformist, cautious, critical, and sensitive",
];

const FARSI_NAMES: &str = include_str!("../data/farsi_names.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("expected {expected} personas, got {got}")]
    PersonaCount { expected: usize, got: usize },
    #[error("initial blue probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("a world needs at least one agent and one decision day")]
    EmptyWorld,
    #[error("day {day} is not filled yet (last filled day is {current})")]
    DayOutOfRange { day: usize, current: usize },
    #[error("agent index {0} is out of range")]
    AgentOutOfRange(usize),
    #[error("day {day} is not writable while the last filled day is {current}")]
    DayNotWritable { day: usize, current: usize },
    #[error("cell (agent {agent}, day {day}) is already filled")]
    CellOverwrite { agent: usize, day: usize },
    #[error("invalid name set: {0}")]
    NameSet(String),
    #[error("malformed matrix CSV: {0}")]
    MatrixCsv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShirtColor {
    Blue,
    Green,
}

impl ShirtColor {
    /// Matrix encoding: 1 for blue, 0 for green.
    pub fn as_bit(self) -> u8 {
        match self {
            ShirtColor::Blue => 1,
            ShirtColor::Green => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            1 => Some(ShirtColor::Blue),
            0 => Some(ShirtColor::Green),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ShirtColor::Blue => "blue",
            ShirtColor::Green => "green",
        }
    }

    pub fn other(self) -> Self {
        match self {
            ShirtColor::Blue => ShirtColor::Green,
            ShirtColor::Green => ShirtColor::Blue,
        }
    }
}

impl fmt::Display for ShirtColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShirtColor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blue" | "1" => Ok(ShirtColor::Blue),
            "green" | "0" => Ok(ShirtColor::Green),
            other => Err(format!("not a shirt color: {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformityTier {
    ExtremelyConformist,
    HighlyConformist,
    Conformist,
    LowConformist,
    NonConformist,
}

impl ConformityTier {
    pub const ALL: [ConformityTier; 5] = [
        ConformityTier::ExtremelyConformist,
        ConformityTier::HighlyConformist,
        ConformityTier::Conformist,
        ConformityTier::LowConformist,
        ConformityTier::NonConformist,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConformityTier::ExtremelyConformist => "extremely conformist",
            ConformityTier::HighlyConformist => "highly conformist",
            ConformityTier::Conformist => "conformist",
            ConformityTier::LowConformist => "low conformist",
            ConformityTier::NonConformist => "non-conformist",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        let label = label.trim();
        Self::ALL.into_iter().find(|t| t.label() == label)
    }
}

/// An agent's identity: a name and an optional trait description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPersona {
    pub name: String,
    pub conformity_tier: Option<ConformityTier>,
    pub extra_traits: Vec<String>,
}

impl AgentPersona {
    pub fn new(name: impl Into<String>) -> Self {
        AgentPersona {
            name: name.into(),
            conformity_tier: None,
            extra_traits: Vec::new(),
        }
    }

    /// Parses a comma-joined trait list such as
    /// `"low conformist, curious, friendly, and sensitive"`. A leading token
    /// naming a conformity tier becomes the tier; the rest are extras.
    pub fn from_trait_list(name: impl Into<String>, traits: &str) -> Self {
        let mut tokens: Vec<String> = traits
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.strip_prefix("and ").unwrap_or(t).trim().to_string()
            })
            .filter(|t| !t.is_empty())
            .collect();
        let conformity_tier = tokens.first().and_then(|t| ConformityTier::from_label(t));
        if conformity_tier.is_some() {
            tokens.remove(0);
        }
        AgentPersona {
            name: name.into(),
            conformity_tier,
            extra_traits: tokens,
        }
    }

    /// Renders the trait tokens in the list style "a, b, c, and d". Empty when
    /// the persona carries no traits.
    pub fn trait_sentence(&self) -> String {
        let tokens: Vec<&str> = self
            .conformity_tier
            .map(ConformityTier::label)
            .into_iter()
            .chain(self.extra_traits.iter().map(String::as_str))
            .collect();
        match tokens.as_slice() {
            [] => String::new(),
            [one] => (*one).to_string(),
            [a, b] => format!("{a} and {b}"),
            [init @ .., last] => format!("{}, and {last}", init.join(", ")),
        }
    }
}

/// Which trait information each agent receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaMode {
    /// Conformity tier only.
    ConformityOnly,
    /// No trait sentence at all.
    NoTraits,
    /// Conformity tier plus three extra traits.
    Extended,
    /// The three extra traits without the conformity tier.
    ExtrasOnly,
}

/// Builds personas for `names`, assigning trait entries positionally. Worlds
/// larger than the 20-entry trait table cycle through it.
pub fn persona_list(mode: PersonaMode, names: &NameSet) -> Vec<AgentPersona> {
    names
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let full = AgentPersona::from_trait_list(
                name.as_str(),
                EXTENDED_TRAITS[i % EXTENDED_TRAITS.len()],
            );
            match mode {
                PersonaMode::Extended => full,
                PersonaMode::ConformityOnly => AgentPersona {
                    extra_traits: Vec::new(),
                    ..full
                },
                PersonaMode::ExtrasOnly => AgentPersona {
                    conformity_tier: None,
                    ..full
                },
                PersonaMode::NoTraits => AgentPersona::new(name.as_str()),
            }
        })
        .collect()
}

/// The 20 base-name personas for `mode`.
pub fn base_persona_list(mode: PersonaMode) -> Vec<AgentPersona> {
    persona_list(mode, &NameSet::base())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameSet {
    pub label: String,
    pub names: Vec<String>,
}

impl NameSet {
    pub fn new(label: impl Into<String>, names: Vec<String>) -> Result<Self, DomainError> {
        if names.is_empty() {
            return Err(DomainError::NameSet("no names given".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(DomainError::NameSet("blank name".into()));
            }
            if name.contains(',') || name.contains('\n') {
                return Err(DomainError::NameSet(format!(
                    "name {name:?} contains a comma or newline"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(DomainError::NameSet(format!("duplicate name {name:?}")));
            }
        }
        Ok(NameSet {
            label: label.into(),
            names,
        })
    }

    pub fn base() -> Self {
        NameSet {
            label: "base".into(),
            names: BASE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Stand-in list of 20 common Iranian names in Persian script; see
    /// `data/farsi_names.txt`.
    pub fn farsi() -> Self {
        let names = FARSI_NAMES
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        NameSet::new("farsi", names).expect("bundled farsi name list is valid")
    }

    pub fn by_label(label: &str) -> Option<Self> {
        match label {
            "base" => Some(Self::base()),
            "farsi" => Some(Self::farsi()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// The choice matrix of one simulation: `n_agents` rows, `n_days + 1` columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    personas: Vec<AgentPersona>,
    n_days: usize,
    choices: Vec<Vec<Option<ShirtColor>>>,
    current_day: usize,
}

/// Creates a world and fills day 0; see the module docs for the draw order.
pub fn init_world(
    n_agents: usize,
    n_days: usize,
    p_blue_initial: f64,
    seed: u64,
    personas: Vec<AgentPersona>,
) -> Result<WorldState, DomainError> {
    if !(0.0..=1.0).contains(&p_blue_initial) {
        return Err(DomainError::Probability(p_blue_initial));
    }
    if personas.len() != n_agents {
        return Err(DomainError::PersonaCount {
            expected: n_agents,
            got: personas.len(),
        });
    }
    if n_agents == 0 || n_days == 0 {
        return Err(DomainError::EmptyWorld);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices = (0..n_agents)
        .map(|_| {
            let draw: f64 = rng.random();
            let initial = if draw < p_blue_initial {
                ShirtColor::Blue
            } else {
                ShirtColor::Green
            };
            let mut row = vec![None; n_days + 1];
            row[0] = Some(initial);
            row
        })
        .collect();
    Ok(WorldState {
        personas,
        n_days,
        choices,
        current_day: 0,
    })
}

impl WorldState {
    /// A world whose day 0 is given explicitly rather than drawn.
    pub fn with_initial(
        personas: Vec<AgentPersona>,
        n_days: usize,
        initial: &[ShirtColor],
    ) -> Result<Self, DomainError> {
        if personas.len() != initial.len() {
            return Err(DomainError::PersonaCount {
                expected: initial.len(),
                got: personas.len(),
            });
        }
        if initial.is_empty() || n_days == 0 {
            return Err(DomainError::EmptyWorld);
        }
        let choices = initial
            .iter()
            .map(|&c| {
                let mut row = vec![None; n_days + 1];
                row[0] = Some(c);
                row
            })
            .collect();
        Ok(WorldState {
            personas,
            n_days,
            choices,
            current_day: 0,
        })
    }

    /// Builds a fully filled world from complete rows (one `Vec` of
    /// `n_days + 1` colors per agent).
    pub fn from_rows(
        personas: Vec<AgentPersona>,
        rows: Vec<Vec<ShirtColor>>,
    ) -> Result<Self, DomainError> {
        if personas.len() != rows.len() {
            return Err(DomainError::PersonaCount {
                expected: rows.len(),
                got: personas.len(),
            });
        }
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if width < 2 {
            return Err(DomainError::EmptyWorld);
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(DomainError::MatrixCsv("ragged rows".into()));
        }
        Ok(WorldState {
            personas,
            n_days: width - 1,
            choices: rows
                .into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
            current_day: width - 1,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.personas.len()
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn current_day(&self) -> usize {
        self.current_day
    }

    pub fn personas(&self) -> &[AgentPersona] {
        &self.personas
    }

    pub fn is_complete(&self) -> bool {
        self.current_day == self.n_days
    }

    pub fn choice(&self, agent: usize, day: usize) -> Option<ShirtColor> {
        self.choices.get(agent)?.get(day).copied().flatten()
    }

    /// Number of agents in blue on a filled `day`.
    pub fn count_blue(&self, day: usize) -> Result<usize, DomainError> {
        if day > self.current_day {
            return Err(DomainError::DayOutOfRange {
                day,
                current: self.current_day,
            });
        }
        Ok(self
            .choices
            .iter()
            .filter(|row| row[day] == Some(ShirtColor::Blue))
            .count())
    }

    pub fn count_green(&self, day: usize) -> Result<usize, DomainError> {
        Ok(self.n_agents() - self.count_blue(day)?)
    }

    /// Blue counts for days `0..=current_day`.
    pub fn blue_series(&self) -> Vec<usize> {
        (0..=self.current_day)
            .map(|d| self.count_blue(d).expect("filled day"))
            .collect()
    }

    /// Writes one cell of the next unfilled column. Once every agent has a
    /// color for that column, `current_day` advances to it.
    pub fn record_choice(
        &mut self,
        agent: usize,
        day: usize,
        color: ShirtColor,
    ) -> Result<(), DomainError> {
        if agent >= self.n_agents() {
            return Err(DomainError::AgentOutOfRange(agent));
        }
        if day <= self.current_day {
            return Err(DomainError::CellOverwrite { agent, day });
        }
        if day != self.current_day + 1 || day > self.n_days {
            return Err(DomainError::DayNotWritable {
                day,
                current: self.current_day,
            });
        }
        let cell = &mut self.choices[agent][day];
        if cell.is_some() {
            return Err(DomainError::CellOverwrite { agent, day });
        }
        *cell = Some(color);
        if self.choices.iter().all(|row| row[day].is_some()) {
            self.current_day = day;
        }
        Ok(())
    }

    /// Renders the filled columns as `agent,day0,day1,...` CSV, one row per
    /// agent, cells `0`/`1`, LF line endings.
    pub fn to_matrix_csv(&self) -> String {
        let mut out = String::from("agent");
        for d in 0..=self.current_day {
            out.push_str(&format!(",day{d}"));
        }
        out.push('\n');
        for (persona, row) in self.personas.iter().zip(&self.choices) {
            out.push_str(&persona.name);
            for cell in &row[..=self.current_day] {
                let bit = cell.expect("filled column").as_bit();
                out.push(',');
                out.push(char::from(b'0' + bit));
            }
            out.push('\n');
        }
        out
    }

    /// Parses a complete matrix CSV. Personas carry names only.
    pub fn from_matrix_csv(text: &str) -> Result<Self, DomainError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| DomainError::MatrixCsv(e.to_string()))?
            .clone();
        if headers.get(0) != Some("agent") {
            return Err(DomainError::MatrixCsv("first column must be `agent`".into()));
        }
        for (i, h) in headers.iter().skip(1).enumerate() {
            if h != format!("day{i}") {
                return Err(DomainError::MatrixCsv(format!("unexpected header {h:?}")));
            }
        }
        let mut personas = Vec::new();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| DomainError::MatrixCsv(e.to_string()))?;
            personas.push(AgentPersona::new(&record[0]));
            let row = record
                .iter()
                .skip(1)
                .map(|cell| {
                    cell.parse::<u8>()
                        .ok()
                        .and_then(ShirtColor::from_bit)
                        .ok_or_else(|| DomainError::MatrixCsv(format!("bad cell {cell:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(personas, rows)
    }
}
