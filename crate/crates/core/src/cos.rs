//! The summarization chain: frame summaries, period summaries, reasoning, action extraction and
//! the queue-driven episode loop.

use std::collections::VecDeque;
use std::sync::{mpsc, Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{build_prompt, summary_request, Backend, InferenceError, PromptTemplate};
use crate::error::ConfigError;
use crate::extractor::{extract, parse_decisions, ActionCatalog, Extraction};
use crate::map::PlayerId;
use crate::opponent::{builtin_policy, difficulty_params, match_variant, DifficultyParams};
use crate::record::{ActionSource, MatchRecord, RecordEvent, RecordHeader, TickSample, CHECKPOINT_INTERVAL};
use crate::sim::{ActionEvent, GameState, MacroAction, MatchConfig, Observation};
use crate::techtree::{Race, TechTree};
use crate::textualizer::{render_observation, render_time, RenderedObservation, GAME_TIME_PREFIX};

pub use crate::backends::UNCHANGED_LINE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizeMode {
    RuleBased,
    ModelBased,
}

impl std::str::FromStr for SummarizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rule" | "rulebased" => Ok(SummarizeMode::RuleBased),
            "model" | "modelbased" => Ok(SummarizeMode::ModelBased),
            _ => Err(format!("unknown summarize mode `{s}` (expected rule-based or model-based)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub k: usize,
    pub summarize_mode: SummarizeMode,
    pub prompt_template: PromptTemplate,
    pub decision_tick_stride: u32,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            k: 5,
            summarize_mode: SummarizeMode::RuleBased,
            prompt_template: PromptTemplate::Prompt2,
            decision_tick_stride: 5,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::Invalid("chain length k must be at least 1".into()));
        }
        if self.decision_tick_stride == 0 {
            return Err(ConfigError::Invalid("decision stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub tick: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub span: (u32, u32),
    pub frames: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningSections {
    pub overview: String,
    pub stage: String,
    pub our_situation: String,
    pub our_strategy: String,
    pub enemy_strategy: String,
    pub key_info: String,
    pub race_notes: String,
    pub suggestions: String,
    pub decisions: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningOutput {
    pub raw_text: String,
    pub sections: ReasoningSections,
    pub decisions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CosError {
    #[error("no frames to summarize")]
    EmptyPeriod,
    #[error("frame at tick {later} precedes frame at tick {earlier}")]
    OutOfOrder { earlier: u32, later: u32 },
    #[error("inference failed: {error}")]
    Inference { error: InferenceError, period: Box<PeriodSummary> },
    #[error("prompt construction failed: {0}")]
    Prompt(String),
}

fn line_key_len(lines: &[String]) -> usize {
    lines.iter().map(|l| l.len() + 1).sum()
}

/// Rule-based single-frame summary: zero counts dropped, sections identical to `previous`
/// collapsed to a marker, every section header kept.
pub fn summarize_frame(current: &RenderedObservation, previous: Option<&RenderedObservation>) -> FrameSummary {
    let mut text = format!("{GAME_TIME_PREFIX}{}\n", current.game_time);
    for (i, s) in current.sections.iter().enumerate() {
        let kept = crate::backends::drop_zero_counts(s).lines;
        let same = previous.and_then(|p| p.sections.get(i)).is_some_and(|p| p.lines == s.lines);
        text.push_str(&format!("[{}]\n", s.title));
        if same && UNCHANGED_LINE.len() + 1 < line_key_len(&kept) {
            text.push_str(UNCHANGED_LINE);
            text.push('\n');
        } else {
            for l in kept {
                text.push_str(&l);
                text.push('\n');
            }
        }
    }
    FrameSummary { tick: current.tick, text }
}

/// Model-based single-frame summary; rejects answers that are empty or longer than the input.
pub fn summarize_frame_model(
    current: &RenderedObservation,
    race: Race,
    backend: &mut dyn Backend,
) -> Result<FrameSummary, InferenceError> {
    let raw = current.to_text();
    let answer = backend.complete(&summary_request(race, &raw))?;
    let body = answer.trim();
    if body.is_empty() || body.len() + 1 > raw.len() {
        return Err(InferenceError::Parse(format!(
            "summary of {} characters for an observation of {}",
            body.len(),
            raw.len()
        )));
    }
    let text = if body.starts_with(GAME_TIME_PREFIX) {
        format!("{body}\n")
    } else {
        format!("{GAME_TIME_PREFIX}{}\n{body}\n", current.game_time)
    };
    let text = if text.len() > raw.len() { format!("{body}\n") } else { text };
    Ok(FrameSummary { tick: current.tick, text })
}

/// Joins chronologically ordered frame summaries under one period header.
pub fn summarize_period(frames: &[FrameSummary]) -> Result<PeriodSummary, CosError> {
    let (first, last) = match (frames.first(), frames.last()) {
        (Some(f), Some(l)) => (f.tick, l.tick),
        _ => return Err(CosError::EmptyPeriod),
    };
    for w in frames.windows(2) {
        if w[1].tick < w[0].tick {
            return Err(CosError::OutOfOrder { earlier: w[0].tick, later: w[1].tick });
        }
    }
    let mut text = format!("Summary of {} frames from {} to {}\n", frames.len(), render_time(first), render_time(last));
    for f in frames {
        text.push_str(&f.text);
    }
    Ok(PeriodSummary { span: (first, last), frames: frames.len(), text })
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?im)^[\s\-*#>]*(?:\d+[.)]\s*)?\**\s*(game overview|information overview|current game stage|current game|our situation|our current strategy|our strategy|enemy'?s strategy|key information|race notes|race specific prompt|suggestions|decisions)\s*\**\s*:[ \t]*\**",
        )
        .unwrap()
    })
}

/// Splits a completion into its analysis sections; the raw text is kept untouched.
pub fn parse_reasoning(raw: &str) -> ReasoningOutput {
    let mut sections = ReasoningSections::default();
    let heads: Vec<(usize, usize, String)> = header_re()
        .captures_iter(raw)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), c[1].to_ascii_lowercase())
        })
        .collect();
    for (i, (_, end, name)) in heads.iter().enumerate() {
        let stop = heads.get(i + 1).map(|h| h.0).unwrap_or(raw.len());
        let body = raw[*end..stop].trim().to_string();
        let slot = match name.as_str() {
            "game overview" | "information overview" => &mut sections.overview,
            "current game stage" | "current game" => &mut sections.stage,
            "our situation" => &mut sections.our_situation,
            "our strategy" | "our current strategy" => &mut sections.our_strategy,
            "key information" => &mut sections.key_info,
            "race notes" | "race specific prompt" => &mut sections.race_notes,
            "suggestions" => &mut sections.suggestions,
            "decisions" => &mut sections.decisions,
            _ => &mut sections.enemy_strategy,
        };
        if slot.is_empty() {
            *slot = body;
        } else {
            slot.push('\n');
            slot.push_str(&body);
        }
    }
    ReasoningOutput { raw_text: raw.to_string(), sections, decisions: parse_decisions(raw) }
}

/// Only the decision block of a completion, one `i: <TOKEN>` line per decision.
pub fn decisions_only(reasoning: &ReasoningOutput) -> String {
    let mut out = String::from("Decisions:\n");
    for (i, d) in reasoning.decisions.iter().enumerate() {
        out.push_str(&format!("{i}: <{d}>\n"));
    }
    out
}

/// Everything one inference produced.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub index: u64,
    pub frames: Vec<FrameSummary>,
    pub period: PeriodSummary,
    pub reasoning: ReasoningOutput,
    pub extraction: Extraction,
    pub degradations: Vec<String>,
}

impl InferenceResult {
    pub fn log(&self, catalog: &ActionCatalog, tree: &TechTree, out: &mut Vec<RecordEvent>) {
        let i = self.index;
        for d in &self.degradations {
            out.push(RecordEvent::Degradation { inference: i, message: d.clone() });
        }
        for f in &self.frames {
            out.push(RecordEvent::FrameSummary { inference: i, tick: f.tick, text: f.text.clone() });
        }
        out.push(RecordEvent::PeriodSummary { inference: i, span: self.period.span, text: self.period.text.clone() });
        out.push(RecordEvent::Completion { inference: i, text: self.reasoning.raw_text.clone() });
        out.push(RecordEvent::ExtractedActions {
            inference: i,
            tokens: self.extraction.actions.iter().map(|a| token_for(a, catalog, tree)).collect(),
            diagnostics: self.extraction.diagnostics.clone(),
        });
    }
}

pub fn token_for(a: &MacroAction, catalog: &ActionCatalog, tree: &TechTree) -> String {
    catalog.token_of(a).map(str::to_string).unwrap_or_else(|| a.token(tree))
}

/// Runs summarization, reasoning and extraction for one period of frames.
pub struct Reasoner<B: Backend> {
    pub cfg: ChainConfig,
    pub race: Race,
    catalog: Arc<ActionCatalog>,
    tree: Arc<TechTree>,
    backend: B,
    inferences: u64,
}

impl<B: Backend> Reasoner<B> {
    pub fn new(cfg: ChainConfig, race: Race, catalog: Arc<ActionCatalog>, tree: Arc<TechTree>, backend: B) -> Self {
        Reasoner { cfg, race, catalog, tree, backend, inferences: 0 }
    }

    pub fn inferences(&self) -> u64 {
        self.inferences
    }

    pub fn backend_mut(&mut self) -> &mut B {
        &mut self.backend
    }

    pub fn run(&mut self, observations: &[Observation]) -> Result<InferenceResult, CosError> {
        let index = self.inferences;
        self.inferences += 1;
        let rendered: Vec<RenderedObservation> = observations.iter().map(render_observation).collect();
        let mut degradations = Vec::new();
        let mut frames = Vec::with_capacity(rendered.len());
        for (i, r) in rendered.iter().enumerate() {
            let rule = || summarize_frame(r, if i > 0 { rendered.get(i - 1) } else { None });
            let frame = match self.cfg.summarize_mode {
                SummarizeMode::RuleBased => rule(),
                SummarizeMode::ModelBased => match summarize_frame_model(r, self.race, &mut self.backend) {
                    Ok(f) => f,
                    Err(e) => {
                        degradations.push(format!("frame {} summarized by rules: {e}", render_time(r.tick)));
                        rule()
                    }
                },
            };
            frames.push(frame);
        }
        let period = summarize_period(&frames)?;
        let reasoning = self.infer(&period)?;
        let extraction = extract(&reasoning.raw_text, self.cfg.k, &self.catalog);
        Ok(InferenceResult { index, frames, period, reasoning, extraction, degradations })
    }

    /// Reasoning over one period summary.
    pub fn infer(&mut self, period: &PeriodSummary) -> Result<ReasoningOutput, CosError> {
        infer(period, &self.cfg, self.race, &self.catalog, &self.tree, &mut self.backend)
    }
}

pub fn infer(
    period: &PeriodSummary,
    cfg: &ChainConfig,
    race: Race,
    catalog: &ActionCatalog,
    tree: &TechTree,
    backend: &mut dyn Backend,
) -> Result<ReasoningOutput, CosError> {
    let req = build_prompt(cfg.prompt_template, race, cfg.k, catalog, tree, &period.text)
        .map_err(|e| CosError::Prompt(e.to_string()))?;
    let text =
        backend.complete(&req).map_err(|error| CosError::Inference { error, period: Box::new(period.clone()) })?;
    Ok(parse_reasoning(&text))
}

/// Observation and action queues around a reasoner.
pub struct CosAgent<B: Backend> {
    reasoner: Reasoner<B>,
    q_obs: VecDeque<Observation>,
    q_act: VecDeque<(MacroAction, ActionSource)>,
}

impl<B: Backend> CosAgent<B> {
    /// Starts with `k` copies of the initial observation queued.
    pub fn new(reasoner: Reasoner<B>, initial: Observation) -> Self {
        let k = reasoner.cfg.k;
        CosAgent { reasoner, q_obs: std::iter::repeat_n(initial, k).collect(), q_act: VecDeque::new() }
    }

    pub fn observe(&mut self, o: Observation) {
        self.q_obs.push_back(o);
    }

    pub fn queued_actions(&self) -> usize {
        self.q_act.len()
    }

    pub fn inferences(&self) -> u64 {
        self.reasoner.inferences()
    }

    pub fn reasoner(&self) -> &Reasoner<B> {
        &self.reasoner
    }

    /// Infers when a full period of observations is queued, then hands out the next action.
    pub fn next_action(
        &mut self,
        log: &mut Vec<RecordEvent>,
    ) -> Result<((MacroAction, ActionSource), Option<InferenceResult>), CosError> {
        let k = self.reasoner.cfg.k;
        let mut produced = None;
        if self.q_obs.len() >= k {
            let frames: Vec<Observation> = self.q_obs.drain(..).collect();
            let result = self.reasoner.run(&frames)?;
            result.log(&self.reasoner.catalog, &self.reasoner.tree, log);
            for (position, a) in result.extraction.actions.iter().enumerate() {
                self.q_act.push_back((*a, ActionSource::Inference { inference: result.index, position }));
            }
            produced = Some(result);
        }
        assert!(self.q_act.len() <= k, "action queue holds {} > {k}", self.q_act.len());
        let next = self.q_act.pop_front().unwrap_or((MacroAction::NOOP, ActionSource::Recovery));
        Ok((next, produced))
    }
}

/// The simulation from the agent's side, with the built-in opponent folded in.
pub struct Environment {
    state: GameState,
    agent: PlayerId,
    opponent: Option<(DifficultyParams, ChaCha8Rng)>,
    stride: u32,
}

const OPPONENT_SEED_SALT: u64 = 0x0990_5eed_0990_5eed;

impl Environment {
    /// A match against the built-in opponent at `difficulty`, or an idle one when `None`.
    pub fn new(
        config: &MatchConfig,
        seed: u64,
        difficulty: Option<u8>,
        stride: u32,
    ) -> Result<Environment, ConfigError> {
        let mut config = config.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ OPPONENT_SEED_SALT);
        let params = match difficulty {
            Some(level) => Some(match_variant(&difficulty_params(level)?, &mut rng)),
            None => None,
        };
        if let Some(p) = &params {
            config.income_milli[PlayerId::P2.index()] = p.income_milli();
        }
        let state = crate::sim::new_match(&config, seed)?;
        Ok(Environment { state, agent: PlayerId::P1, opponent: params.map(|p| (p, rng)), stride: stride.max(1) })
    }

    /// Wraps an existing state; the opponent, if any, plays `params` exactly.
    pub fn from_state(state: GameState, opponent: Option<DifficultyParams>, stride: u32) -> Environment {
        let seed = state.seed;
        Environment {
            state,
            agent: PlayerId::P1,
            opponent: opponent.map(|p| (p, ChaCha8Rng::seed_from_u64(seed ^ OPPONENT_SEED_SALT))),
            stride: stride.max(1),
        }
    }

    /// The opponent's settings for this match.
    pub fn opponent(&self) -> Option<&DifficultyParams> {
        self.opponent.as_ref().map(|(p, _)| p)
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut GameState {
        &mut self.state
    }

    pub fn agent(&self) -> PlayerId {
        self.agent
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn observe(&self) -> Observation {
        self.state.observe(self.agent)
    }

    pub fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    pub fn sample(&self) -> TickSample {
        let s = &self.state;
        let p = self.agent;
        let st = s.player(p);
        let used = s.supply_used(p);
        let cap = s.supply_cap(p);
        TickSample {
            tick: s.tick,
            supply_used: used,
            supply_cap: cap,
            total_minerals_spent: st.total_minerals_spent,
            total_gas_spent: st.total_gas_spent,
            at_population_cap: used == cap,
            completed_kinds: st.ever_completed.iter().filter(|id| !s.tree().entity(**id).is_unit()).count() as u32,
        }
    }

    /// Applies the agent's action, then advances one decision stride.
    pub fn step(&mut self, action: &MacroAction) -> (ActionEvent, Vec<RecordEvent>) {
        let ev = self.state.apply_macro(self.agent, action);
        let mut events = Vec::new();
        self.advance(self.stride, &mut events);
        (ev, events)
    }

    /// Advances up to `ticks` ticks, letting the built-in opponent act on its decision ticks.
    pub fn advance(&mut self, ticks: u32, events: &mut Vec<RecordEvent>) {
        for _ in 0..ticks {
            if self.state.is_terminal() {
                return;
            }
            if let Some((params, rng)) = &mut self.opponent {
                if self.state.tick.is_multiple_of(params.decision_period) {
                    let foe = self.agent.other();
                    let view = if params.cheat_vision { self.state.observe_full(foe) } else { self.state.observe(foe) };
                    for a in builtin_policy(&view, params, self.state.tree(), rng) {
                        self.state.apply_macro(foe, &a);
                    }
                }
            }
            for e in self.state.tick() {
                if !matches!(e, crate::sim::GameEvent::Completed { .. }) {
                    events.push(RecordEvent::Game { event: e });
                }
            }
            events.push(RecordEvent::Sample(self.sample()));
            if self.state.tick.is_multiple_of(CHECKPOINT_INTERVAL) {
                events.push(RecordEvent::Checkpoint { tick: self.state.tick, hash: self.state.state_hash() });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LoopMode {
    Lockstep,
    Realtime { ticks_per_second: f64 },
}

impl LoopMode {
    pub fn label(&self) -> String {
        match self {
            LoopMode::Lockstep => "lockstep".into(),
            LoopMode::Realtime { ticks_per_second } => format!("realtime@{ticks_per_second}"),
        }
    }
}

/// A finished (or aborted) episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub record: MatchRecord,
    pub error: Option<CosError>,
    pub decisions: u64,
    pub inferences: u64,
    pub max_queue: usize,
}

fn push_step(events: &mut Vec<RecordEvent>, step: u64, ev: &ActionEvent, source: ActionSource, token: String) {
    events.push(RecordEvent::ExecutedAction {
        step,
        tick: ev.tick,
        token: token.clone(),
        action: ev.action,
        source,
        accepted: ev.accepted,
    });
    if !ev.accepted {
        events.push(RecordEvent::Rejection {
            step,
            tick: ev.tick,
            token,
            reason: ev.reason.clone().unwrap_or_default(),
        });
    }
}

fn observation_event(step: u64, o: &Observation) -> RecordEvent {
    RecordEvent::Observation { step, tick: o.tick, text: render_observation(o).to_text() }
}

fn finish(
    env: &Environment,
    header: RecordHeader,
    mut events: Vec<RecordEvent>,
    error: Option<CosError>,
    decisions: u64,
    inferences: u64,
    max_queue: usize,
) -> EpisodeOutcome {
    events.push(RecordEvent::Terminal {
        tick: env.state.tick,
        outcome: env.state.outcome,
        reward: env.state.outcome(env.agent).unwrap_or(0),
        decisions,
        inferences,
        aborted: error.is_some(),
    });
    EpisodeOutcome { record: MatchRecord { header, events }, error, decisions, inferences, max_queue }
}

/// Plays one episode with the environment paused during every inference.
pub fn run_episode<B: Backend>(
    mut env: Environment,
    backend: B,
    cfg: &ChainConfig,
    catalog: Arc<ActionCatalog>,
    header: RecordHeader,
) -> EpisodeOutcome {
    let tree = env.state.tree_arc();
    let race = env.state.player(env.agent).race;
    let o0 = env.observe();
    let mut events = vec![observation_event(0, &o0)];
    let mut agent = CosAgent::new(Reasoner::new(*cfg, race, catalog.clone(), tree.clone(), backend), o0);
    let mut step = 0u64;
    let mut max_queue = 0;
    let mut error = None;
    while !env.is_terminal() {
        let ((action, source), _) = match agent.next_action(&mut events) {
            Ok(x) => x,
            Err(e) => {
                events.push(RecordEvent::InferenceError {
                    inference: agent.inferences().saturating_sub(1),
                    message: e.to_string(),
                });
                error = Some(e);
                break;
            }
        };
        max_queue = max_queue.max(agent.queued_actions() + 1);
        assert!(agent.queued_actions() < cfg.k.max(1) + 1);
        let (ev, tick_events) = env.step(&action);
        push_step(&mut events, step, &ev, source, token_for(&action, &catalog, &tree));
        events.extend(tick_events);
        step += 1;
        let o = env.observe();
        events.push(observation_event(step, &o));
        agent.observe(o);
    }
    let inferences = agent.inferences();
    finish(&env, header, events, error, step, inferences, max_queue)
}

/// Plays one episode against the wall clock: the simulation never waits for inference, and
/// decision opportunities with an empty action queue execute a recovery no-op.
pub fn run_episode_realtime<B: Backend + 'static>(
    mut env: Environment,
    backend: B,
    cfg: &ChainConfig,
    catalog: Arc<ActionCatalog>,
    header: RecordHeader,
    ticks_per_second: f64,
) -> EpisodeOutcome {
    let tree = env.state.tree_arc();
    let race = env.state.player(env.agent).race;
    let k = cfg.k;
    let (req_tx, req_rx) = mpsc::channel::<Vec<Observation>>();
    let (res_tx, res_rx) = mpsc::channel::<Result<InferenceResult, CosError>>();
    let mut reasoner = Reasoner::new(*cfg, race, catalog.clone(), tree.clone(), backend);
    let worker = std::thread::spawn(move || {
        for frames in req_rx {
            if res_tx.send(reasoner.run(&frames)).is_err() {
                break;
            }
        }
    });

    let period = Duration::from_secs_f64(env.stride as f64 / ticks_per_second.max(1e-3));
    let o0 = env.observe();
    let mut events = vec![observation_event(0, &o0)];
    let mut q_obs: VecDeque<Observation> = std::iter::repeat_n(o0, k).collect();
    let mut q_act: VecDeque<(MacroAction, ActionSource)> = VecDeque::new();
    let mut in_flight = false;
    let (mut step, mut inferences, mut max_queue) = (0u64, 0u64, 0usize);
    let mut deadline = Instant::now();
    while !env.is_terminal() {
        if q_obs.len() >= k && !in_flight {
            let skip = q_obs.len() - k;
            let frames: Vec<Observation> = q_obs.drain(..).skip(skip).collect();
            in_flight = req_tx.send(frames).is_ok();
        }
        while let Ok(res) = res_rx.try_recv() {
            in_flight = false;
            inferences += 1;
            match res {
                Ok(r) => {
                    if !q_act.is_empty() {
                        events.push(RecordEvent::Degradation {
                            inference: r.index,
                            message: format!("{} stale actions dropped", q_act.len()),
                        });
                        q_act.clear();
                    }
                    r.log(&catalog, &tree, &mut events);
                    for (position, a) in r.extraction.actions.iter().enumerate() {
                        q_act.push_back((*a, ActionSource::Inference { inference: r.index, position }));
                    }
                }
                Err(e) => {
                    events.push(RecordEvent::InferenceError { inference: inferences - 1, message: e.to_string() })
                }
            }
        }
        assert!(q_act.len() <= k, "action queue holds {} > {k}", q_act.len());
        max_queue = max_queue.max(q_act.len());
        let (action, source) = q_act.pop_front().unwrap_or((MacroAction::NOOP, ActionSource::Recovery));
        let (ev, tick_events) = env.step(&action);
        push_step(&mut events, step, &ev, source, token_for(&action, &catalog, &tree));
        events.extend(tick_events);
        step += 1;
        let o = env.observe();
        events.push(observation_event(step, &o));
        q_obs.push_back(o);
        deadline += period;
        if let Some(wait) = deadline.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
    drop(req_tx);
    let _ = worker.join();
    finish(&env, header, events, None, step, inferences, max_queue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ChatRequest, ScriptedBackend, ScriptedStyle};
    use crate::sim::MatchConfig;

    fn fresh() -> (GameState, RenderedObservation) {
        let s = crate::sim::new_match(&MatchConfig::default(), 42).unwrap();
        let r = render_observation(&s.observe(PlayerId::P1));
        (s, r)
    }

    #[test]
    fn frame_summary_drops_zeros_and_keeps_headers() {
        let (_, r) = fresh();
        let f = summarize_frame(&r, None);
        assert!(f.text.contains("Minerals: 50"));
        assert!(!f.text.contains("Zealot: 0"));
        for t in crate::textualizer::SECTION_TITLES {
            assert!(f.text.contains(&format!("[{t}]")));
        }
        assert!(f.text.len() <= r.to_text().len());
        assert_eq!(f, summarize_frame(&r, None));
    }

    #[test]
    fn repeated_frame_collapses_unchanged_sections() {
        let (_, r) = fresh();
        let f = summarize_frame(&r, Some(&r));
        assert!(f.text.contains(UNCHANGED_LINE));
        assert!(f.text.len() < summarize_frame(&r, None).text.len());
    }

    #[test]
    fn period_header_and_span() {
        let frames: Vec<FrameSummary> = (0..5)
            .map(|i| FrameSummary { tick: i * 5, text: format!("{GAME_TIME_PREFIX}{}\n", render_time(i * 5)) })
            .collect();
        let p = summarize_period(&frames).unwrap();
        assert_eq!(p.span, (0, 20));
        assert_eq!(p.frames, 5);
        let one = summarize_period(&frames[..1]).unwrap();
        assert_eq!(one.text, format!("Summary of 1 frames from 00:00 to 00:00\n{}", frames[0].text));
        let mut rev = frames.clone();
        rev.reverse();
        assert!(matches!(summarize_period(&rev), Err(CosError::OutOfOrder { .. })));
        assert_eq!(summarize_period(&[]), Err(CosError::EmptyPeriod));
    }

    #[test]
    fn reasoning_sections_and_decisions() {
        let raw = "Game Overview: fine.\nCurrent Game Stage: early game\n**Suggestions:** build more\nDecisions: 0: <BUILD NEXUS> 1: <BUILD PYLON> 2: <BUILD GATEWAY> 3: <TRAIN PROBE> 4: <SCOUTING PROBE>";
        let r = parse_reasoning(raw);
        assert_eq!(r.raw_text, raw);
        assert_eq!(r.sections.overview, "fine.");
        assert_eq!(r.sections.stage, "early game");
        assert_eq!(r.sections.suggestions, "build more");
        assert_eq!(r.decisions, ["BUILD NEXUS", "BUILD PYLON", "BUILD GATEWAY", "TRAIN PROBE", "SCOUTING PROBE"]);
        assert!(!decisions_only(&r).contains("build more"));
        let empty = parse_reasoning("");
        assert_eq!(empty.sections, ReasoningSections::default());
        assert!(empty.decisions.is_empty());
    }

    struct Failing;

    impl Backend for Failing {
        fn complete(&mut self, _: &ChatRequest) -> Result<String, InferenceError> {
            Err(InferenceError::Unavailable("down".into()))
        }

        fn describe(&self) -> String {
            "failing".into()
        }
    }

    #[test]
    fn model_summary_falls_back_to_rules() {
        let (s, _) = fresh();
        let tree = s.tree_arc();
        let cat = Arc::new(ActionCatalog::default_for(&tree));
        let cfg = ChainConfig { summarize_mode: SummarizeMode::ModelBased, ..ChainConfig::default() };
        let mut r = Reasoner::new(cfg, Race::Protoss, cat.clone(), tree.clone(), Failing);
        let err = r.run(&[s.observe(PlayerId::P1)]).unwrap_err();
        assert!(matches!(err, CosError::Inference { .. }));
        let mut ok =
            Reasoner::new(cfg, Race::Protoss, cat, tree.clone(), ScriptedBackend::new(tree, ScriptedStyle::Full));
        let res = ok.run(&vec![s.observe(PlayerId::P1); 5]).unwrap();
        assert!(res.degradations.is_empty());
        assert_eq!(res.extraction.actions.len(), 5);
    }

    #[test]
    fn scripted_inference_is_deterministic() {
        let (s, _) = fresh();
        let tree = s.tree_arc();
        let cat = Arc::new(ActionCatalog::default_for(&tree));
        let run = || {
            let mut r = Reasoner::new(
                ChainConfig::default(),
                Race::Protoss,
                cat.clone(),
                tree.clone(),
                ScriptedBackend::new(tree.clone(), ScriptedStyle::Full),
            );
            r.run(&vec![s.observe(PlayerId::P1); 5]).unwrap()
        };
        assert_eq!(run(), run());
    }

    fn header() -> RecordHeader {
        RecordHeader {
            version: crate::record::RECORD_VERSION,
            match_id: "t".into(),
            config_hash: "h".into(),
            seed: 7,
            map: "altitude".into(),
            difficulty: 1,
            k: 5,
            prompt: PromptTemplate::Prompt2,
            summarize_mode: SummarizeMode::RuleBased,
            stride: 5,
            max_ticks: 200,
            backend: "scripted".into(),
            mode: "lockstep".into(),
            total_kinds: 0,
        }
    }

    fn short_env(max_ticks: u32) -> Environment {
        let cfg = MatchConfig { max_ticks, ..MatchConfig::default() };
        Environment::new(&cfg, 7, Some(1), 5).unwrap()
    }

    #[test]
    fn forty_opportunities_take_eight_inferences() {
        let env = short_env(200);
        let tree = env.state().tree_arc();
        let cat = Arc::new(ActionCatalog::default_for(&tree));
        let out =
            run_episode(env, ScriptedBackend::new(tree, ScriptedStyle::Full), &ChainConfig::default(), cat, header());
        assert_eq!(out.decisions, 40);
        assert_eq!(out.inferences, 8);
        assert_eq!(out.record.inference_count(), 8);
        assert!(out.max_queue <= 5);
        assert_eq!(out.record.reward(), Some(0));
        assert!(out.error.is_none());
    }

    #[test]
    fn lost_start_runs_no_inference() {
        let mut env = short_env(200);
        let foe = PlayerId::P2;
        env.state_mut().outcome = Some(crate::sim::Outcome::Win(foe));
        let tree = env.state().tree_arc();
        let cat = Arc::new(ActionCatalog::default_for(&tree));
        let out =
            run_episode(env, ScriptedBackend::new(tree, ScriptedStyle::Full), &ChainConfig::default(), cat, header());
        assert_eq!(out.inferences, 0);
        assert_eq!(out.record.reward(), Some(-1));
    }

    #[test]
    fn inference_failure_aborts_with_partial_record() {
        let env = short_env(200);
        let tree = env.state().tree_arc();
        let cat = Arc::new(ActionCatalog::default_for(&tree));
        let out = run_episode(env, Failing, &ChainConfig::default(), cat, header());
        assert!(matches!(out.error, Some(CosError::Inference { .. })));
        assert!(out.record.events.iter().any(|e| matches!(e, RecordEvent::InferenceError { .. })));
        assert!(matches!(out.record.terminal(), Some(RecordEvent::Terminal { aborted: true, .. })));
    }

    #[test]
    fn episodes_are_reproducible() {
        let play = || {
            let env = short_env(600);
            let tree = env.state().tree_arc();
            let cat = Arc::new(ActionCatalog::default_for(&tree));
            run_episode(env, ScriptedBackend::new(tree, ScriptedStyle::Full), &ChainConfig::default(), cat, header())
                .record
                .to_jsonl()
        };
        assert_eq!(play(), play());
    }

    #[test]
    fn realtime_fills_gaps_with_recovery() {
        let env = short_env(100);
        let tree = env.state().tree_arc();
        let cat = Arc::new(ActionCatalog::default_for(&tree));
        let out = run_episode_realtime(
            env,
            ScriptedBackend::new(tree, ScriptedStyle::Full),
            &ChainConfig::default(),
            cat,
            header(),
            2000.0,
        );
        assert_eq!(out.decisions, 20);
        assert!(out.max_queue <= 5);
        assert!(out.record.events.iter().any(|e| matches!(e, RecordEvent::Terminal { .. })));
    }
}
