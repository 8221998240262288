//! Live matches: one simulation thread per match, fed by a command queue and publishing
//! stream messages on a broadcast channel.

use std::collections::VecDeque;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use textcraft_core::backends::PromptTemplate;
use textcraft_core::cos::{
    token_for, ChainConfig, CosError, Environment, InferenceResult, Reasoner, ReasoningSections,
};
use textcraft_core::extractor::{match_one, ActionCatalog, MatchMethod};
use textcraft_core::map::PlayerId;
use textcraft_core::sim::{MacroAction, MatchConfig, Observation};
use textcraft_core::techtree::TechTree;
use textcraft_core::textualizer::{render_observation, render_time};
use tokio::sync::broadcast;

use crate::protocol::{
    ActionOutcome, ClientMessage, MatchPhase, MatchSpec, MatchStatus, ObservationSections, OpponentSpec, ServerMessage,
    StateMessage, DEFAULT_SPEED, MAX_SPEED,
};

const DECISION_STRIDE: u32 = 5;
const DEFAULT_LIVE_TICKS: u32 = 3600;
const PAUSE_POLL: Duration = Duration::from_millis(20);

struct Shared {
    phase: MatchPhase,
    tick: u32,
    reward: Option<i8>,
    latest: Option<ServerMessage>,
}

/// A created match and the handles its sockets use.
pub struct LiveMatch {
    pub id: String,
    spec: MatchSpec,
    speed: f64,
    shared: Arc<Mutex<Shared>>,
    commands: Sender<ClientMessage>,
    updates: broadcast::Sender<ServerMessage>,
    runner: Mutex<Option<Runner>>,
}

impl LiveMatch {
    /// Validates the spec and prepares the simulation without starting the clock.
    pub fn create(id: String, spec: MatchSpec) -> Result<LiveMatch, String> {
        let speed = spec.speed.unwrap_or(DEFAULT_SPEED);
        if !(speed > 0.0 && speed <= MAX_SPEED) {
            return Err(format!("speed must be in (0, {MAX_SPEED}] ticks per second"));
        }
        let max_ticks = spec.max_ticks.unwrap_or(DEFAULT_LIVE_TICKS);
        if max_ticks == 0 {
            return Err("max_ticks must be positive".into());
        }
        let config = MatchConfig { max_ticks, ..MatchConfig::default() };
        let human = match config.races.iter().position(|r| *r == spec.side) {
            Some(0) => PlayerId::P1,
            Some(_) => PlayerId::P2,
            None => return Err(format!("side {} is not playable on this ladder", spec.side.display())),
        };
        let seed = spec.seed.unwrap_or_else(rand_seed);
        let (env, agent) = match &spec.opponent {
            OpponentSpec::Builtin { level } => {
                if human != PlayerId::P1 {
                    return Err("the built-in opponent plays Zerg; side must be protoss".into());
                }
                let env = Environment::new(&config, seed, Some(*level), DECISION_STRIDE).map_err(|e| e.to_string())?;
                (env, None)
            }
            OpponentSpec::CosAgent { backend, prompt, k, .. } => {
                let env = Environment::new(&config, seed, None, DECISION_STRIDE).map_err(|e| e.to_string())?;
                let tree = env.state().tree_arc();
                let chain = ChainConfig {
                    k: k.unwrap_or(ChainConfig::default().k),
                    prompt_template: prompt.unwrap_or(PromptTemplate::Prompt2),
                    ..ChainConfig::default()
                };
                chain.validate().map_err(|e| e.to_string())?;
                let backend = backend.build(tree.clone()).map_err(|e| e.to_string())?;
                let side = human.other();
                let race = env.state().player(side).race;
                let catalog = Arc::new(ActionCatalog::default_for(&tree));
                let reasoner = Reasoner::new(chain, race, catalog, tree, backend);
                let initial = env.state().observe(side);
                (env, Some(AgentWorker::spawn(reasoner, side, chain.k, initial)))
            }
        };
        let tree = env.state().tree_arc();
        let (commands, inbox) = mpsc::channel();
        let (updates, _) = broadcast::channel(256);
        let shared = Arc::new(Mutex::new(Shared { phase: MatchPhase::Waiting, tick: 0, reward: None, latest: None }));
        let disclose = matches!(spec.opponent, OpponentSpec::CosAgent { disclose_reasoning: true, .. });
        let runner = Runner {
            catalog: ActionCatalog::default_for(&tree),
            tree,
            env,
            human,
            agent,
            disclose,
            speed,
            inbox,
            updates: updates.clone(),
            shared: shared.clone(),
        };
        let first = runner.state_message(None, false);
        shared.lock().unwrap().latest = Some(first);
        Ok(LiveMatch { id, spec, speed, shared, commands, updates, runner: Mutex::new(Some(runner)) })
    }

    pub fn status(&self) -> MatchStatus {
        let s = self.shared.lock().unwrap();
        MatchStatus {
            id: self.id.clone(),
            status: s.phase,
            tick: s.tick,
            time: render_time(s.tick),
            side: self.spec.side,
            speed: self.speed,
            opponent: self.spec.opponent.clone(),
            reward: s.reward,
        }
    }

    /// Subscribes to the stream, starting the clock on the first call. The returned
    /// message is the latest one published before subscribing.
    pub fn subscribe(&self) -> (Option<ServerMessage>, broadcast::Receiver<ServerMessage>) {
        let rx = self.updates.subscribe();
        let latest = self.shared.lock().unwrap().latest.clone();
        if let Some(runner) = self.runner.lock().unwrap().take() {
            self.shared.lock().unwrap().phase = MatchPhase::Running;
            std::thread::Builder::new()
                .name(format!("match-{}", self.id))
                .spawn(move || runner.run())
                .expect("spawn match thread");
        }
        (latest, rx)
    }

    pub fn send(&self, msg: ClientMessage) {
        let _ = self.commands.send(msg);
    }
}

fn rand_seed() -> u64 {
    let id = uuid::Uuid::new_v4();
    let b = id.as_bytes();
    u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
}

/// Runs a summarization-chain agent on its own thread so inference never stalls the clock.
struct AgentWorker {
    side: PlayerId,
    k: usize,
    frames: VecDeque<Observation>,
    actions: VecDeque<MacroAction>,
    requests: Sender<Vec<Observation>>,
    results: Receiver<Result<InferenceResult, CosError>>,
    in_flight: bool,
    reasoning: Option<ReasoningSections>,
}

impl AgentWorker {
    fn spawn<B: textcraft_core::backends::Backend + 'static>(
        mut reasoner: Reasoner<B>,
        side: PlayerId,
        k: usize,
        initial: Observation,
    ) -> AgentWorker {
        let (requests, req_rx) = mpsc::channel::<Vec<Observation>>();
        let (res_tx, results) = mpsc::channel();
        std::thread::spawn(move || {
            for frames in req_rx {
                if res_tx.send(reasoner.run(&frames)).is_err() {
                    break;
                }
            }
        });
        AgentWorker {
            side,
            k,
            frames: std::iter::repeat_n(initial, k).collect(),
            actions: VecDeque::new(),
            requests,
            results,
            in_flight: false,
            reasoning: None,
        }
    }

    fn next(&mut self, obs: Observation) -> MacroAction {
        while let Ok(res) = self.results.try_recv() {
            self.in_flight = false;
            match res {
                Ok(r) => {
                    self.actions = r.extraction.actions.iter().copied().collect();
                    self.reasoning = Some(r.reasoning.sections.clone());
                }
                Err(e) => tracing::warn!(error = %e, "agent inference failed"),
            }
        }
        if self.frames.len() >= self.k && !self.in_flight {
            let skip = self.frames.len() - self.k;
            let frames: Vec<Observation> = self.frames.drain(..).skip(skip).collect();
            self.in_flight = self.requests.send(frames).is_ok();
        }
        self.frames.push_back(obs);
        self.actions.pop_front().unwrap_or(MacroAction::NOOP)
    }
}

struct Runner {
    env: Environment,
    tree: Arc<TechTree>,
    catalog: ActionCatalog,
    human: PlayerId,
    agent: Option<AgentWorker>,
    disclose: bool,
    speed: f64,
    inbox: Receiver<ClientMessage>,
    updates: broadcast::Sender<ServerMessage>,
    shared: Arc<Mutex<Shared>>,
}

impl Runner {
    fn state_message(&self, last_action: Option<ActionOutcome>, paused: bool) -> ServerMessage {
        let s = self.env.state();
        let obs = s.observe(self.human);
        let legal = s.legal_actions(self.human).iter().map(|a| token_for(a, &self.catalog, &self.tree)).collect();
        let reasoning = if self.disclose { self.agent.as_ref().and_then(|a| a.reasoning.clone()) } else { None };
        ServerMessage::State(Box::new(StateMessage {
            tick: s.tick,
            time: render_time(s.tick),
            observation: ObservationSections::from_rendered(&render_observation(&obs)),
            legal,
            reasoning,
            last_action,
            paused,
        }))
    }

    fn publish(&self, msg: ServerMessage, phase: MatchPhase) {
        {
            let mut sh = self.shared.lock().unwrap();
            sh.phase = phase;
            sh.tick = self.env.state().tick;
            if let ServerMessage::Result { reward, .. } = &msg {
                sh.reward = Some(*reward);
            }
            if !matches!(msg, ServerMessage::Error { .. }) {
                sh.latest = Some(msg.clone());
            }
        }
        let _ = self.updates.send(msg);
    }

    /// Resolves a submitted token to a catalog action; only exact spellings are accepted.
    fn parse_token(&self, token: &str) -> Result<MacroAction, String> {
        let m = match_one(token, &self.catalog);
        if m.method == MatchMethod::Exact {
            Ok(m.action)
        } else {
            Err(format!("unknown action token `{token}`"))
        }
    }

    fn handle(&self, msg: ClientMessage, pending: &mut Option<(String, MacroAction)>, paused: &mut bool) {
        match msg {
            ClientMessage::Action { token } => match self.parse_token(&token) {
                Ok(a) => *pending = Some((token, a)),
                Err(message) => self.publish(ServerMessage::Error { message }, self.phase(*paused)),
            },
            ClientMessage::Pause if !*paused => {
                *paused = true;
                self.publish(self.state_message(None, true), MatchPhase::Paused);
            }
            ClientMessage::Resume if *paused => {
                *paused = false;
                self.publish(self.state_message(None, false), MatchPhase::Running);
            }
            ClientMessage::Pause | ClientMessage::Resume => {}
        }
    }

    fn phase(&self, paused: bool) -> MatchPhase {
        if paused {
            MatchPhase::Paused
        } else {
            MatchPhase::Running
        }
    }

    fn run(mut self) {
        let stride = self.env.stride();
        let period = Duration::from_secs_f64(stride as f64 / self.speed);
        let mut pending: Option<(String, MacroAction)> = None;
        let mut paused = false;
        let mut deadline = Instant::now() + period;
        self.publish(self.state_message(None, false), MatchPhase::Running);
        while !self.env.is_terminal() {
            // Commands arriving before the deadline apply at this opportunity.
            loop {
                let wait = if paused { PAUSE_POLL } else { deadline.saturating_duration_since(Instant::now()) };
                match self.inbox.recv_timeout(wait) {
                    Ok(msg) => {
                        let was_paused = paused;
                        self.handle(msg, &mut pending, &mut paused);
                        if was_paused && !paused {
                            deadline = Instant::now() + period;
                        }
                    }
                    Err(RecvTimeoutError::Timeout) if paused => continue,
                    Err(RecvTimeoutError::Timeout) => break,
                    Err(RecvTimeoutError::Disconnected) => {
                        if paused {
                            return;
                        }
                        std::thread::sleep(deadline.saturating_duration_since(Instant::now()));
                        break;
                    }
                }
            }
            let outcome = pending.take().map(|(token, action)| {
                let ev = self.env.state_mut().apply_macro(self.human, &action);
                ActionOutcome { token, accepted: ev.accepted, reason: ev.reason }
            });
            if let Some(agent) = &mut self.agent {
                let obs = self.env.state().observe(agent.side);
                let a = agent.next(obs);
                self.env.state_mut().apply_macro(agent.side, &a);
            }
            let mut events = Vec::new();
            self.env.advance(stride, &mut events);
            self.publish(self.state_message(outcome, false), MatchPhase::Running);
            deadline += period;
        }
        let s = self.env.state();
        let reward = s.outcome(self.human).unwrap_or(0);
        self.publish(ServerMessage::Result { reward, tick: s.tick }, MatchPhase::Finished);
    }
}
