//! Experiment runs, report files and replay verification.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    Backend, HttpBackend, HttpConfig, InferenceError, PromptTemplate, ScriptedBackend, ScriptedStyle,
};
use crate::cos::{run_episode, run_episode_realtime, token_for, ChainConfig, Environment, LoopMode, SummarizeMode};
use crate::error::ConfigError;
use crate::extractor::ActionCatalog;
use crate::map::PlayerId;
use crate::metrics::{aggregate, compute, format_table, MetricsError, MetricsReport, SummaryRow};
use crate::record::{MatchRecord, RecordError, RecordEvent, RecordHeader, RECORD_VERSION};
use crate::sim::{MatchConfig, Outcome};
use crate::techtree::TechTree;

pub const DEFAULT_EXPERIMENT_TICKS: u32 = 3600;
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_JSONL: &str = "report.ndjson";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Scripted {
        style: ScriptedStyle,
    },
    /// Endpoint and model fall back to the environment when absent.
    Http {
        base_url: Option<String>,
        model: Option<String>,
        /// First retry delay in milliseconds.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        backoff_ms: Option<u64>,
    },
}

impl BackendSpec {
    pub fn build(&self, tree: Arc<TechTree>) -> Result<Box<dyn Backend>, InferenceError> {
        match self {
            BackendSpec::Scripted { style } => Ok(Box::new(ScriptedBackend::new(tree, *style))),
            BackendSpec::Http { base_url, model, backoff_ms } => {
                let mut cfg = HttpConfig::from_env(base_url.clone(), model.clone())?;
                if let Some(ms) = backoff_ms {
                    cfg.backoff_base = std::time::Duration::from_millis(*ms);
                }
                Ok(Box::new(HttpBackend::new(cfg)?))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            BackendSpec::Scripted { style } => {
                format!("scripted:{}", serde_json::to_value(style).unwrap().as_str().unwrap_or("auto"))
            }
            BackendSpec::Http { model, .. } => format!("http:{}", model.as_deref().unwrap_or("default")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub matches: u32,
    pub seed: u64,
    pub difficulty: u8,
    pub map: String,
    pub prompt: PromptTemplate,
    pub k: usize,
    pub stride: u32,
    pub summarize_mode: SummarizeMode,
    pub backend: BackendSpec,
    pub mode: LoopMode,
    pub max_ticks: u32,
    /// Not part of the config hash.
    pub output_dir: PathBuf,
    /// Worker threads; not part of the config hash.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            matches: 1,
            seed: 42,
            difficulty: 3,
            map: MatchConfig::default().map,
            prompt: PromptTemplate::Prompt2,
            k: 5,
            stride: 5,
            summarize_mode: SummarizeMode::RuleBased,
            backend: BackendSpec::Scripted { style: ScriptedStyle::Auto },
            mode: LoopMode::Lockstep,
            max_ticks: DEFAULT_EXPERIMENT_TICKS,
            output_dir: PathBuf::from("runs"),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.chain().validate()?;
        crate::opponent::difficulty_params(self.difficulty)?;
        if self.max_ticks == 0 {
            return Err(ConfigError::Invalid("max_ticks must be positive".into()));
        }
        if let LoopMode::Realtime { ticks_per_second } = self.mode {
            if !(ticks_per_second.is_finite() && ticks_per_second > 0.0) {
                return Err(ConfigError::Invalid("realtime speed must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn chain(&self) -> ChainConfig {
        ChainConfig {
            k: self.k,
            summarize_mode: self.summarize_mode,
            prompt_template: self.prompt,
            decision_tick_stride: self.stride,
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig { map: self.map.clone(), max_ticks: self.max_ticks, ..MatchConfig::default() }
    }

    /// Digest of every field that affects match content.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
            o.remove("jobs");
        }
        hex::encode(&Sha256::digest(v.to_string().as_bytes())[..8])
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let base = self.seed;
        (0..self.matches as u64).map(move |i| base.wrapping_add(i))
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

/// The record file name for a seed.
pub fn record_file_name(seed: u64) -> String {
    format!("match-{seed}.jsonl")
}

/// Plays one match of an experiment in memory.
pub fn play_match(cfg: &ExperimentConfig, seed: u64) -> Result<crate::cos::EpisodeOutcome, ConfigError> {
    let match_cfg = cfg.match_config();
    let env = Environment::new(&match_cfg, seed, Some(cfg.difficulty), cfg.stride)?;
    let tree = env.state().tree_arc();
    let catalog = Arc::new(ActionCatalog::default_for(&tree));
    let hash = cfg.config_hash();
    let race = env.state().player(PlayerId::P1).race;
    let header = RecordHeader {
        version: RECORD_VERSION,
        match_id: format!("{hash}-{seed}"),
        config_hash: hash,
        seed,
        map: cfg.map.clone(),
        difficulty: cfg.difficulty,
        k: cfg.k,
        prompt: cfg.prompt,
        summarize_mode: cfg.summarize_mode,
        stride: cfg.stride,
        max_ticks: cfg.max_ticks,
        backend: cfg.backend.label(),
        mode: cfg.mode.label(),
        total_kinds: tree.tech_kind_count(race) as u32,
    };
    let chain = cfg.chain();
    let backend = match cfg.backend.build(tree) {
        Ok(b) => b,
        Err(e) => Box::new(Unreachable(e)) as Box<dyn Backend>,
    };
    Ok(match cfg.mode {
        LoopMode::Lockstep => run_episode(env, backend, &chain, catalog, header),
        LoopMode::Realtime { ticks_per_second } => {
            run_episode_realtime(env, backend, &chain, catalog, header, ticks_per_second)
        }
    })
}

/// Stands in for a backend that could not be constructed.
struct Unreachable(InferenceError);

impl Backend for Unreachable {
    fn complete(&mut self, _: &crate::backends::ChatRequest) -> Result<String, InferenceError> {
        Err(self.0.clone())
    }

    fn describe(&self) -> String {
        "unreachable".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub seed: u64,
    pub path: PathBuf,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub matches: Vec<MatchSummary>,
    pub row: Option<SummaryRow>,
    pub report_text: PathBuf,
    pub report_jsonl: PathBuf,
}

impl ExperimentSummary {
    pub fn all_completed(&self) -> bool {
        self.matches.iter().all(|m| m.error.is_none())
    }
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ReportLine<'a> {
    Match {
        config_hash: &'a str,
        seed: u64,
        #[serde(flatten)]
        report: &'a MetricsReport,
    },
    Failed {
        config_hash: &'a str,
        seed: u64,
        error: &'a str,
    },
    Summary {
        config_hash: &'a str,
        #[serde(flatten)]
        row: &'a SummaryRow,
    },
}

fn worker_count(cfg: &ExperimentConfig) -> usize {
    let n = if cfg.jobs == 0 { std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1) } else { cfg.jobs };
    n.clamp(1, cfg.matches.max(1) as usize)
}

/// Plays every match, writes one record per match and the aggregate report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let hash = cfg.config_hash();
    let seeds: Vec<u64> = cfg.seeds().collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<MatchSummary, HarnessError>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..worker_count(cfg) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = seeds.get(i) else { break };
                let r = run_one(cfg, seed);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut matches = Vec::with_capacity(seeds.len());
    for r in results.into_inner().unwrap() {
        matches.push(r.expect("every seed ran")?);
    }
    let reports: Vec<MetricsReport> = matches.iter().filter_map(|m| m.report.clone()).collect();
    let label = format!("{} L{} {:?}", cfg.backend.label(), cfg.difficulty, cfg.prompt);
    let row = aggregate(&label, &reports).ok();

    let mut text = format!("config {hash}\n");
    if let Some(row) = &row {
        text.push_str(&format_table(std::slice::from_ref(row)));
    }
    for m in matches.iter().filter(|m| m.error.is_some()) {
        text.push_str(&format!("seed {} failed: {}\n", m.seed, m.error.as_deref().unwrap_or("")));
    }
    let mut jsonl = String::new();
    for m in &matches {
        let line = match (&m.report, &m.error) {
            (Some(report), None) => ReportLine::Match { config_hash: &hash, seed: m.seed, report },
            _ => ReportLine::Failed {
                config_hash: &hash,
                seed: m.seed,
                error: m.error.as_deref().unwrap_or("no metrics"),
            },
        };
        jsonl.push_str(&serde_json::to_string(&line).expect("report serializes"));
        jsonl.push('\n');
    }
    if let Some(row) = &row {
        jsonl.push_str(
            &serde_json::to_string(&ReportLine::Summary { config_hash: &hash, row }).expect("report serializes"),
        );
        jsonl.push('\n');
    }
    let report_text = cfg.output_dir.join(REPORT_TEXT);
    let report_jsonl = cfg.output_dir.join(REPORT_JSONL);
    std::fs::write(&report_text, text).map_err(io_err(&report_text))?;
    std::fs::write(&report_jsonl, jsonl).map_err(io_err(&report_jsonl))?;
    Ok(ExperimentSummary { config_hash: hash, matches, row, report_text, report_jsonl })
}

fn run_one(cfg: &ExperimentConfig, seed: u64) -> Result<MatchSummary, HarnessError> {
    let outcome = play_match(cfg, seed)?;
    let path = cfg.output_dir.join(record_file_name(seed));
    outcome.record.write(&path)?;
    let error = outcome.error.as_ref().map(|e| e.to_string());
    let report = compute(&outcome.record).ok();
    tracing::info!(seed, reward = ?outcome.record.reward(), "match finished");
    Ok(MatchSummary { seed, path, report, error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub tick: u32,
    /// 1-based line of the first record line that disagrees with the re-simulation.
    pub line: usize,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub match_id: String,
    pub checkpoints: usize,
    pub actions: usize,
    pub divergence: Option<Divergence>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.divergence.is_none()
    }
}

pub fn replay_verify_path(path: &Path) -> Result<VerifyReport, HarnessError> {
    Ok(replay_verify(&MatchRecord::read(path)?)?)
}

/// Re-simulates a record from its seed, feeding its executed actions, and compares checkpoints.
pub fn replay_verify(record: &MatchRecord) -> Result<VerifyReport, ConfigError> {
    let h = &record.header;
    let cfg = MatchConfig { map: h.map.clone(), max_ticks: h.max_ticks, ..MatchConfig::default() };
    let mut env = Environment::new(&cfg, h.seed, Some(h.difficulty), h.stride)?;
    let tree = env.state().tree_arc();
    let catalog = ActionCatalog::default_for(&tree);
    let mut produced: Vec<RecordEvent> = Vec::new();
    let mut cursor = 0usize;
    let mut report = VerifyReport { match_id: h.match_id.clone(), checkpoints: 0, actions: 0, divergence: None };
    let diverge = |tick, index, expected: String, actual: String| Divergence {
        tick,
        line: MatchRecord::line_of(index),
        expected,
        actual,
    };
    for (i, e) in record.events.iter().enumerate() {
        match e {
            RecordEvent::ExecutedAction { tick, token, action, .. } => {
                if *tick != env.state().tick {
                    report.divergence =
                        Some(diverge(*tick, i, format!("tick {}", env.state().tick), format!("tick {tick}")));
                    return Ok(report);
                }
                let canonical = token_for(action, &catalog, &tree);
                if &canonical != token {
                    report.divergence = Some(diverge(*tick, i, canonical, token.clone()));
                    return Ok(report);
                }
                let (_, events) = env.step(action);
                produced.extend(events.into_iter().filter(|e| matches!(e, RecordEvent::Checkpoint { .. })));
                report.actions += 1;
            }
            RecordEvent::Checkpoint { tick, hash } => {
                let actual = produced.get(cursor);
                cursor += 1;
                match actual {
                    Some(RecordEvent::Checkpoint { tick: t, hash: h2 }) if t == tick && h2 == hash => {
                        report.checkpoints += 1;
                    }
                    Some(RecordEvent::Checkpoint { tick: t, hash: h2 }) => {
                        report.divergence = Some(diverge(*tick, i, format!("{t}:{h2}"), format!("{tick}:{hash}")));
                        return Ok(report);
                    }
                    _ => {
                        report.divergence = Some(diverge(*tick, i, "no checkpoint".into(), format!("{tick}:{hash}")));
                        return Ok(report);
                    }
                }
            }
            RecordEvent::Terminal { tick, outcome, .. } => {
                let expected: Option<Outcome> = env.state().outcome;
                if *tick != env.state().tick || *outcome != expected {
                    report.divergence = Some(diverge(
                        *tick,
                        i,
                        format!("{}:{:?}", env.state().tick, expected),
                        format!("{tick}:{outcome:?}"),
                    ));
                    return Ok(report);
                }
            }
            _ => {}
        }
    }
    if cursor < produced.len() {
        if let RecordEvent::Checkpoint { tick, hash } = &produced[cursor] {
            report.divergence = Some(Divergence {
                tick: *tick,
                line: MatchRecord::line_of(record.events.len()),
                expected: format!("{tick}:{hash}"),
                actual: "missing checkpoint".into(),
            });
        }
    }
    Ok(report)
}
