//! Experiment flags and their merge with a JSON config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use textcraft_core::backends::{PromptTemplate, ScriptedStyle};
use textcraft_core::cos::{LoopMode, SummarizeMode};
use textcraft_core::harness::{BackendSpec, ExperimentConfig};

/// Parses a value through its serde string form, e.g. `prompt2` or `rule_based`.
fn serde_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase().replace('-', "_"))).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeKind {
    Lockstep,
    Realtime,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON file whose fields override the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub matches: Option<u32>,
    /// Base seed; match i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Built-in opponent level, 1 to 10.
    #[arg(long)]
    pub difficulty: Option<u8>,
    #[arg(long)]
    pub map: Option<String>,
    /// prompt1 or prompt2.
    #[arg(long, value_parser = serde_name::<PromptTemplate>)]
    pub prompt: Option<PromptTemplate>,
    /// Frames per inference and actions per completion.
    #[arg(long)]
    pub k: Option<usize>,
    /// Ticks between decision opportunities.
    #[arg(long)]
    pub stride: Option<u32>,
    /// rule_based or model_based.
    #[arg(long, value_parser = serde_name::<SummarizeMode>)]
    pub summarize_mode: Option<SummarizeMode>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Scripted policy: auto, full or basic.
    #[arg(long, value_parser = serde_name::<ScriptedStyle>)]
    pub style: Option<ScriptedStyle>,
    /// Chat-completions base URL; falls back to TEXTCRAFT_BASE_URL.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Model name; falls back to TEXTCRAFT_MODEL.
    #[arg(long)]
    pub model: Option<String>,
    /// First retry delay in milliseconds.
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeKind>,
    /// Ticks per second in realtime mode.
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub max_ticks: Option<u32>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 picks the core count.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunArgs {
    fn backend(&self, base: &BackendSpec) -> BackendSpec {
        let kind = self.backend.unwrap_or(match base {
            BackendSpec::Scripted { .. } => BackendKind::Scripted,
            BackendSpec::Http { .. } => BackendKind::Http,
        });
        match kind {
            BackendKind::Scripted => BackendSpec::Scripted {
                style: self.style.unwrap_or(match base {
                    BackendSpec::Scripted { style } => *style,
                    BackendSpec::Http { .. } => ScriptedStyle::Auto,
                }),
            },
            BackendKind::Http => BackendSpec::Http {
                base_url: self.base_url.clone(),
                model: self.model.clone(),
                backoff_ms: self.backoff_ms,
            },
        }
    }

    fn mode(&self, base: LoopMode) -> anyhow::Result<LoopMode> {
        Ok(match (self.mode, self.speed) {
            (Some(ModeKind::Lockstep), Some(_)) => bail!("--speed only applies to --mode realtime"),
            (Some(ModeKind::Lockstep), None) => LoopMode::Lockstep,
            (Some(ModeKind::Realtime), speed) => {
                LoopMode::Realtime { ticks_per_second: speed.unwrap_or(textcraft_server::protocol::DEFAULT_SPEED) }
            }
            (None, Some(speed)) => LoopMode::Realtime { ticks_per_second: speed },
            (None, None) => base,
        })
    }

    /// Flags over defaults, then the config file over both.
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let d = ExperimentConfig::default();
        let from_flags = ExperimentConfig {
            matches: self.matches.unwrap_or(d.matches),
            seed: self.seed.unwrap_or(d.seed),
            difficulty: self.difficulty.unwrap_or(d.difficulty),
            map: self.map.clone().unwrap_or(d.map.clone()),
            prompt: self.prompt.unwrap_or(d.prompt),
            k: self.k.unwrap_or(d.k),
            stride: self.stride.unwrap_or(d.stride),
            summarize_mode: self.summarize_mode.unwrap_or(d.summarize_mode),
            backend: self.backend(&d.backend),
            mode: self.mode(d.mode)?,
            max_ticks: self.max_ticks.unwrap_or(d.max_ticks),
            output_dir: self.output_dir.clone().unwrap_or(d.output_dir.clone()),
            jobs: self.jobs.unwrap_or(d.jobs),
        };
        let mut cfg = match &self.config {
            Some(path) => overlay(&from_flags, &read_object(path)?)?,
            None => from_flags,
        };
        cfg.output_dir = absolute(&cfg.output_dir)?;
        cfg.validate().context("invalid experiment config")?;
        Ok(cfg)
    }
}

fn read_object(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("{}: config must be a JSON object", path.display()),
    }
}

/// Replaces each top-level field of `cfg` present in `file`.
pub fn overlay(cfg: &ExperimentConfig, file: &Map<String, Value>) -> anyhow::Result<ExperimentConfig> {
    let Value::Object(mut merged) = serde_json::to_value(cfg)? else { unreachable!("config serializes to an object") };
    for (k, v) in file {
        if !merged.contains_key(k) {
            bail!("unknown config field `{k}`");
        }
        merged.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(merged)).context("config file")
}

/// Record paths go to the service as absolute paths.
pub fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}
