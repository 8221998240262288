use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textcraft_core::cos::Environment;
use textcraft_core::map::PlayerId;
use textcraft_core::record::RecordEvent;
use textcraft_core::sim::{ArmyOrder, GameEvent, MacroAction, MatchConfig, Observation, Stack};
use textcraft_core::textualizer::{parse_count_line, parse_sections, render_observation};

/// How a generated match is seeded before random play starts.
#[derive(Debug, Clone, Copy)]
pub enum Setup {
    Plain,
    AgentRaid,
    OpponentRaid,
}

pub const SETUPS: [Setup; 3] = [Setup::Plain, Setup::AgentRaid, Setup::OpponentRaid];

pub fn environment(seed: u64, level: u8, max_ticks: u32, setup: Setup) -> Environment {
    let cfg = MatchConfig { max_ticks, ..MatchConfig::default() };
    let mut env = Environment::new(&cfg, seed, Some(level), 5).unwrap();
    let s = env.state_mut();
    let (raider, victim, unit) = match setup {
        Setup::Plain => return env,
        Setup::AgentRaid => (PlayerId::P1, PlayerId::P2, "STALKER"),
        Setup::OpponentRaid => (PlayerId::P2, PlayerId::P1, "ROACH"),
    };
    let target = s.map().home(victim);
    let id = s.tree().id(unit).unwrap();
    s.players[raider.index()].units.entry(target).or_default().insert(id, Stack { count: 30, damage: 0.0 });
    s.players[raider.index()].army_order = ArmyOrder::Attack(target);
    env
}

/// Plays random legal actions; `check` sees the environment after every step.
pub fn play(env: &mut Environment, rng: &mut ChaCha8Rng, mut check: impl FnMut(&Environment, &[RecordEvent])) {
    while !env.is_terminal() {
        let legal = env.state().legal_actions(env.agent());
        let action = if rng.random_bool(0.3) {
            MacroAction::NOOP
        } else {
            legal.choose(rng).copied().unwrap_or(MacroAction::NOOP)
        };
        let (_, events) = env.step(&action);
        check(env, &events);
    }
}

fn own_view_matches(a: &Observation, b: &Observation) -> bool {
    a.resources == b.resources
        && a.units == b.units
        && a.buildings == b.buildings
        && a.in_process == b.in_process
        && a.research == b.research
        && a.army == b.army
}

/// The agent's view never shows stale, inflated or hidden enemy state.
pub fn check_fog(seed: u64, level: u8, ticks: u32, setup: Setup) -> Result<(), String> {
    let mut env = environment(seed, level, ticks, setup);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failure = None;
    play(&mut env, &mut rng, |env, _| {
        if failure.is_some() {
            return;
        }
        let s = env.state();
        let fog = s.observe(PlayerId::P1);
        let truth = s.observe_full(PlayerId::P1);
        for line in &fog.enemy {
            if line.age > s.staleness_window {
                failure = Some(format!("stale line kept: {line:?}"));
            }
            // Lines seen this tick must agree with ground truth.
            if line.age == 0 {
                let real: u32 = truth
                    .enemy
                    .iter()
                    .filter(|t| t.entity == line.entity && t.region == line.region)
                    .map(|t| t.count)
                    .sum();
                if line.count > real {
                    failure = Some(format!("tick {}: {line:?} exceeds truth {real}", s.tick));
                }
            }
        }
        // Hidden enemy state does not leak: changing it leaves the view unchanged.
        let mut hidden = s.clone();
        let foe = &mut hidden.players[PlayerId::P2.index()];
        foe.minerals += 1000;
        foe.gas += 500;
        foe.in_process.clear();
        for (node, bag) in foe.units.iter_mut() {
            if s.players[0].scouted.get(node) != Some(&s.tick) {
                for stack in bag.values_mut() {
                    stack.count += 3;
                }
            }
        }
        if hidden.observe(PlayerId::P1) != fog {
            failure = Some(format!("tick {}: hidden change altered the view", s.tick));
        } else if !own_view_matches(&fog, &truth) {
            failure = Some("own-side view differs between fogged and full observations".into());
        }
    });
    failure.map_or(Ok(()), Err)
}

/// Exactly one terminal event, and the two rewards cancel.
pub fn check_zero_sum(seed: u64, level: u8, ticks: u32, setup: Setup) -> Result<(), String> {
    let mut env = environment(seed, level, ticks, setup);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
    let mut terminals = 0;
    play(&mut env, &mut rng, |_, events| {
        terminals +=
            events.iter().filter(|e| matches!(e, RecordEvent::Game { event: GameEvent::Terminal { .. } })).count();
    });
    let s = env.state();
    if terminals != 1 {
        return Err(format!("{terminals} terminal events"));
    }
    let (a, b) = (s.outcome(PlayerId::P1).unwrap(), s.outcome(PlayerId::P2).unwrap());
    if a + b != 0 || !(-1..=1).contains(&a) {
        return Err(format!("rewards {a} and {b}"));
    }
    if s.tick > ticks {
        return Err(format!("ran to tick {} past {ticks}", s.tick));
    }
    if !s.legal_actions(PlayerId::P1).is_empty() {
        return Err("actions still legal after the end".into());
    }
    Ok(())
}

/// Mined resources always equal stock plus spending, and supply stays in range.
pub fn check_conservation(seed: u64, level: u8, ticks: u32) -> Result<(), String> {
    let mut env = environment(seed, level, ticks, Setup::Plain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 11);
    let mut failure = None;
    play(&mut env, &mut rng, |env, _| {
        for p in PlayerId::both() {
            let st = env.state().player(p);
            if st.minerals_mined != st.minerals as u64 + st.total_minerals_spent
                || st.gas_mined != st.gas as u64 + st.total_gas_spent
            {
                failure = Some(format!("{p:?} at tick {}", env.state().tick));
            }
        }
        let s = env.state();
        if s.supply_used(PlayerId::P1) > 200 + 8 || s.supply_cap(PlayerId::P1) > 200 {
            failure = Some(format!("supply out of range at tick {}", s.tick));
        }
    });
    failure.map_or(Ok(()), Err)
}

/// Every own unit and building count survives rendering and parsing.
pub fn check_round_trip(seed: u64, level: u8, ticks: u32) -> Result<(), String> {
    let mut env = environment(seed, level, ticks, Setup::Plain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 13);
    let mut failure = None;
    play(&mut env, &mut rng, |env, _| {
        let obs = env.observe();
        let text = render_observation(&obs).to_text();
        let sections = parse_sections(&text);
        let counts = |title: &str| -> Vec<(String, u32)> {
            sections
                .iter()
                .find(|s| s.title == title)
                .map(|s| s.lines.iter().filter_map(|l| parse_count_line(l)).map(|(n, c)| (n.to_string(), c)).collect())
                .unwrap_or_default()
        };
        let listed_all: Vec<(String, u32)> = counts("Units").into_iter().chain(counts("Buildings")).collect();
        for line in obs.units.iter().chain(&obs.buildings) {
            let listed = listed_all.iter().find(|(n, _)| *n == line.name).map(|(_, c)| *c);
            if listed != Some(line.count) {
                failure = Some(format!("{} rendered as {listed:?}, actual {}", line.name, line.count));
            }
        }
    });
    failure.map_or(Ok(()), Err)
}
