//! Line-delimited match logs: one header line, then one event per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::PromptTemplate;
use crate::cos::SummarizeMode;
use crate::sim::{GameEvent, MacroAction, Outcome};

pub const RECORD_VERSION: u32 = 1;
/// Ticks between state-hash checkpoints.
pub const CHECKPOINT_INTERVAL: u32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub version: u32,
    pub match_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub map: String,
    pub difficulty: u8,
    pub k: usize,
    pub prompt: PromptTemplate,
    pub summarize_mode: SummarizeMode,
    pub stride: u32,
    pub max_ticks: u32,
    pub backend: String,
    pub mode: String,
    /// Tech and building kinds available to the agent's race.
    pub total_kinds: u32,
}

/// Where an executed action came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSource {
    Inference {
        inference: u64,
        position: usize,
    },
    /// Filler while the action queue was empty.
    Recovery,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub tick: u32,
    pub supply_used: u32,
    pub supply_cap: u32,
    pub total_minerals_spent: u64,
    pub total_gas_spent: u64,
    pub at_population_cap: bool,
    /// Distinct tech and building kinds completed so far.
    pub completed_kinds: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordEvent {
    Observation { step: u64, tick: u32, text: String },
    FrameSummary { inference: u64, tick: u32, text: String },
    PeriodSummary { inference: u64, span: (u32, u32), text: String },
    Completion { inference: u64, text: String },
    ExtractedActions { inference: u64, tokens: Vec<String>, diagnostics: Vec<String> },
    ExecutedAction { step: u64, tick: u32, token: String, action: MacroAction, source: ActionSource, accepted: bool },
    Rejection { step: u64, tick: u32, token: String, reason: String },
    Degradation { inference: u64, message: String },
    InferenceError { inference: u64, message: String },
    Game { event: GameEvent },
    Sample(TickSample),
    Checkpoint { tick: u32, hash: String },
    Terminal { tick: u32, outcome: Option<Outcome>, reward: i8, decisions: u64, inferences: u64, aborted: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "header")]
struct HeaderLine {
    #[serde(flatten)]
    header: RecordHeader,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub header: RecordHeader,
    pub events: Vec<RecordEvent>,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record has no header")]
    MissingHeader,
}

impl MatchRecord {
    pub fn samples(&self) -> impl Iterator<Item = &TickSample> {
        self.events.iter().filter_map(|e| match e {
            RecordEvent::Sample(s) => Some(s),
            _ => None,
        })
    }

    pub fn terminal(&self) -> Option<&RecordEvent> {
        self.events.iter().find(|e| matches!(e, RecordEvent::Terminal { .. }))
    }

    pub fn reward(&self) -> Option<i8> {
        match self.terminal()? {
            RecordEvent::Terminal { reward, .. } => Some(*reward),
            _ => None,
        }
    }

    pub fn won(&self) -> bool {
        self.reward() == Some(1)
    }

    pub fn inference_count(&self) -> u64 {
        self.events.iter().filter(|e| matches!(e, RecordEvent::Completion { .. })).count() as u64
    }

    /// Serialized form: header line plus one line per event, each ending in a newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&HeaderLine { header: self.header.clone() }).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<MatchRecord, RecordError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (n, first) = lines.next().ok_or(RecordError::MissingHeader)?;
        let header: HeaderLine =
            serde_json::from_str(first).map_err(|e| RecordError::Parse { line: n + 1, message: e.to_string() })?;
        let mut events = Vec::new();
        for (n, l) in lines {
            events
                .push(serde_json::from_str(l).map_err(|e| RecordError::Parse { line: n + 1, message: e.to_string() })?);
        }
        Ok(MatchRecord { header: header.header, events })
    }

    pub fn read(path: &Path) -> Result<MatchRecord, RecordError> {
        let io = |source| RecordError::Io { path: path.display().to_string(), source };
        let mut text = String::new();
        let reader = BufReader::new(File::open(path).map_err(io)?);
        for line in reader.lines() {
            text.push_str(&line.map_err(io)?);
            text.push('\n');
        }
        MatchRecord::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), RecordError> {
        let io = |source| RecordError::Io { path: path.display().to_string(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        w.flush().map_err(io)
    }

    /// 1-based line of the event at `index` in the serialized form.
    pub fn line_of(index: usize) -> usize {
        index + 2
    }
}
