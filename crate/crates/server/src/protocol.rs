//! Wire types for the live-match stream and the match endpoints.

use serde::{Deserialize, Serialize};
use textcraft_core::cos::ReasoningSections;
use textcraft_core::harness::BackendSpec;
use textcraft_core::textualizer::RenderedObservation;

/// JSON Schema for every stream message, served at `GET /schema`.
pub const SCHEMA: &str = include_str!("../schema/stream.json");

pub const DEFAULT_SPEED: f64 = 10.0;
pub const MAX_SPEED: f64 = 10_000.0;

/// The six observation categories, one text line per entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSections {
    pub resources: Vec<String>,
    pub units: Vec<String>,
    pub buildings: Vec<String>,
    pub in_process: Vec<String>,
    pub enemy_status: Vec<String>,
    pub research: Vec<String>,
}

impl ObservationSections {
    pub fn from_rendered(r: &RenderedObservation) -> ObservationSections {
        let lines = |title: &str| r.section(title).map(|s| s.lines.clone()).unwrap_or_default();
        ObservationSections {
            resources: lines("Resources"),
            units: lines("Units"),
            buildings: lines("Buildings"),
            in_process: lines("In-Process"),
            enemy_status: lines("Enemy Status"),
            research: lines("Research"),
        }
    }
}

/// What happened to the human's most recent action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub token: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tick: u32,
    pub time: String,
    pub observation: ObservationSections,
    pub legal: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<ReasoningSections>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_action: Option<ActionOutcome>,
    pub paused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(Box<StateMessage>),
    Result { reward: i8, tick: u32 },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Action { token: String },
    Pause,
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpponentSpec {
    /// The scripted opponent at a ladder level; plays Zerg.
    Builtin { level: u8 },
    /// A summarization-chain agent driven by a completion backend.
    CosAgent {
        backend: BackendSpec,
        #[serde(default)]
        prompt: Option<textcraft_core::backends::PromptTemplate>,
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        disclose_reasoning: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSpec {
    pub opponent: OpponentSpec,
    /// Race the human plays.
    #[serde(default = "default_side")]
    pub side: textcraft_core::techtree::Race,
    /// Game ticks per wall-clock second.
    #[serde(default)]
    pub speed: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub max_ticks: Option<u32>,
}

fn default_side() -> textcraft_core::techtree::Race {
    textcraft_core::techtree::Race::Protoss
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPhase {
    /// Created; the clock starts when the first stream subscriber connects.
    Waiting,
    Running,
    Paused,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchStatus {
    pub id: String,
    pub status: MatchPhase,
    pub tick: u32,
    pub time: String,
    pub side: textcraft_core::techtree::Race,
    pub speed: f64,
    pub opponent: OpponentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<i8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
