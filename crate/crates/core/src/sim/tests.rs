use super::*;

fn fresh() -> GameState {
    new_match(&MatchConfig::default(), 42).unwrap()
}

fn id(state: &GameState, key: &str) -> EntityId {
    state.tree().id(key).unwrap()
}

fn token_set(state: &GameState, p: PlayerId) -> Vec<String> {
    state.legal_actions(p).iter().map(|a| a.token(state.tree())).collect()
}

/// Start values read straight out of the shipped tech-tree file.
fn start_field(race: &str, field: &str) -> u32 {
    let line = crate::techtree::DEFAULT_TECH_TREE.lines().find(|l| l.starts_with(&format!("start {race} "))).unwrap();
    line.split_whitespace().find_map(|w| w.strip_prefix(&format!("{field}="))).unwrap().parse().unwrap()
}

#[test]
fn new_match_uses_data_file_start_values() {
    let s = fresh();
    assert_eq!(s.tick, 0);
    assert_eq!(s.players[0].minerals, start_field("PROTOSS", "minerals"));
    assert_eq!(s.players[0].minerals, 50);
    assert_eq!(s.players[1].minerals, start_field("ZERG", "minerals"));
    assert_eq!(s.supply_used(PlayerId::P1), 12);
    assert_eq!(s.supply_cap(PlayerId::P1), 15);
    assert_eq!(s.supply_used(PlayerId::P2), 12);
    assert_eq!(s.supply_cap(PlayerId::P2), 14);
    assert_eq!(s.unit_count(PlayerId::P2, id(&s, "OVERLORD")), 1);
    assert_eq!(s.town_hall_count(PlayerId::P1), 1);
    assert_eq!(s.players[1].larva, 3);
    assert!(s.outcome.is_none());
}

#[test]
fn new_match_is_deterministic_and_validates_map() {
    let a = serde_json::to_string(&fresh()).unwrap();
    let b = serde_json::to_string(&fresh()).unwrap();
    assert_eq!(a, b);
    let cfg = MatchConfig { map: "foo".into(), ..MatchConfig::default() };
    assert!(matches!(new_match(&cfg, 42), Err(ConfigError::UnknownMap(_))));
    let cfg = MatchConfig { tech_tree: Some("/nonexistent/tree.txt".into()), ..MatchConfig::default() };
    assert!(matches!(new_match(&cfg, 42), Err(ConfigError::Io { .. })));
}

#[test]
fn fresh_protoss_legal_set_follows_prerequisites() {
    let mut s = fresh();
    s.players[0].minerals = 1000;
    s.players[0].gas = 1000;
    let tokens = token_set(&s, PlayerId::P1);
    assert!(tokens.contains(&"TRAIN PROBE".to_string()));
    assert!(tokens.contains(&"BUILD PYLON".to_string()));
    assert!(!tokens.contains(&"TRAIN STALKER".to_string()));
    assert!(tokens.contains(&"EMPTY ACTION".to_string()));

    // Oracle: an item is offered only if its prerequisites are among the starting buildings.
    let tree = s.tree().clone();
    let have = [id(&s, "NEXUS")];
    for a in s.legal_actions(PlayerId::P1) {
        let e = match a {
            MacroAction::TrainUnit(e) | MacroAction::BuildStructure(e, _) | MacroAction::Research(e) => e,
            _ => continue,
        };
        let ent = tree.entity(e);
        assert!(ent.requires.iter().all(|r| have.contains(r)), "{}", ent.key);
    }
}

#[test]
fn zero_minerals_excludes_costing_actions() {
    let mut s = fresh();
    s.players[0].minerals = 0;
    for a in s.legal_actions(PlayerId::P1) {
        let cost = match a {
            MacroAction::TrainUnit(e) | MacroAction::BuildStructure(e, _) | MacroAction::Research(e) => {
                s.tree().entity(e).minerals
            }
            MacroAction::Other(OtherAction::ExpandToNewResourceLocation) => 400,
            _ => 0,
        };
        assert_eq!(cost, 0, "{}", a.token(s.tree()));
    }
    assert!(s.legal_actions(PlayerId::P1).contains(&MacroAction::NOOP));
}

#[test]
fn build_pylon_deducts_and_enqueues() {
    let mut s = fresh();
    s.players[0].minerals = 100;
    let pylon = id(&s, "PYLON");
    let ev = s.apply_macro(PlayerId::P1, &MacroAction::BuildStructure(pylon, None));
    assert!(ev.accepted);
    assert_eq!(s.players[0].minerals, 100 - s.tree().entity(pylon).minerals);
    assert_eq!(s.players[0].total_minerals_spent, 100);
    assert_eq!(s.players[0].in_process.len(), 1);
    assert_eq!(s.players[0].in_process[0].entity, pylon);
    assert_eq!(s.players[0].in_process[0].remaining_ticks, s.tree().entity(pylon).ticks);
}

#[test]
fn rejected_action_leaves_state_unchanged() {
    let mut s = fresh();
    s.players[0].minerals = 1000;
    s.players[0].gas = 1000;
    let before = s.state_hash();
    let ev = s.apply_macro(PlayerId::P1, &MacroAction::TrainUnit(id(&s, "STALKER")));
    assert!(!ev.accepted);
    assert!(ev.reason.unwrap().starts_with("missing prerequisite"));
    assert_eq!(s.state_hash(), before);

    let ev = s.apply_macro(PlayerId::P1, &MacroAction::TrainUnit(id(&s, "ZERGLING")));
    assert_eq!(ev.reason.as_deref(), Some("not available to this race"));
    let ev = s.apply_macro(PlayerId::P1, &MacroAction::Research(id(&s, "PYLON")));
    assert_eq!(ev.reason.as_deref(), Some("wrong action category"));
    assert_eq!(s.state_hash(), before);
}

#[test]
fn chrono_boost_cuts_thirty_percent_rounded_down() {
    let mut s = fresh();
    s.players[0].minerals = 50;
    let probe = id(&s, "PROBE");
    let nexus = id(&s, "NEXUS");
    assert!(s.apply_macro(PlayerId::P1, &MacroAction::TrainUnit(probe)).accepted);
    s.players[0].in_process[0].remaining_ticks = 10;
    let ev = s.apply_macro(PlayerId::P1, &MacroAction::Other(OtherAction::ChronoBoost(nexus)));
    assert!(ev.accepted);
    assert_eq!(s.players[0].in_process[0].remaining_ticks, 7);
    // One use per cooldown cycle.
    let ev = s.apply_macro(PlayerId::P1, &MacroAction::Other(OtherAction::ChronoBoost(nexus)));
    assert_eq!(ev.reason.as_deref(), Some("ability not ready"));
    for _ in 0..CHRONO_COOLDOWN {
        s.tick();
    }
    assert_eq!(s.players[0].ability_cooldowns, vec![0]);
}

#[test]
fn probe_completion_adds_worker_and_supply() {
    let mut s = fresh();
    let probe = id(&s, "PROBE");
    assert!(s.apply_macro(PlayerId::P1, &MacroAction::TrainUnit(probe)).accepted);
    let ticks = s.players[0].in_process[0].remaining_ticks;
    // Manual queue walk: the item leaves exactly when its counter reaches zero.
    for t in 1..ticks {
        s.tick();
        assert_eq!(s.players[0].in_process[0].remaining_ticks, ticks - t);
    }
    let events = s.tick();
    assert!(s.players[0].in_process.is_empty());
    assert_eq!(s.worker_count(PlayerId::P1), 13);
    assert_eq!(s.supply_used(PlayerId::P1), 13);
    assert!(events.iter().any(|e| matches!(e, GameEvent::Completed { entity, .. } if entity == "PROBE")));
}

#[test]
fn producer_busy_and_supply_block() {
    let mut s = fresh();
    s.players[0].minerals = 1000;
    let probe = MacroAction::TrainUnit(id(&s, "PROBE"));
    assert!(s.apply_macro(PlayerId::P1, &probe).accepted);
    assert_eq!(s.apply_macro(PlayerId::P1, &probe).reason.as_deref(), Some("producer busy"));

    let mut s = fresh();
    s.players[0].minerals = 10_000;
    s.players[0].workers = 15;
    assert_eq!(s.apply_macro(PlayerId::P1, &probe).reason.as_deref(), Some("supply blocked"));
}

#[test]
fn larva_gates_zerg_production_and_inject_refills() {
    let mut s = fresh();
    s.players[1].minerals = 10_000;
    let drone = MacroAction::TrainUnit(id(&s, "DRONE"));
    let overlord = MacroAction::TrainUnit(id(&s, "OVERLORD"));
    assert!(s.apply_macro(PlayerId::P2, &drone).accepted);
    assert!(s.apply_macro(PlayerId::P2, &drone).accepted);
    assert!(s.apply_macro(PlayerId::P2, &overlord).accepted);
    assert_eq!(s.apply_macro(PlayerId::P2, &overlord).reason.as_deref(), Some("no larva"));
    assert!(s.apply_macro(PlayerId::P2, &MacroAction::Other(OtherAction::InjectLarva)).accepted);
    assert_eq!(s.players[1].larva, INJECT_LARVA);
    assert!(!s.apply_macro(PlayerId::P2, &MacroAction::Other(OtherAction::InjectLarva)).accepted);
    for _ in 0..LARVA_PERIOD {
        s.tick();
    }
    assert_eq!(s.players[1].larva, INJECT_LARVA + 1);
}

#[test]
fn income_saturates_and_conserves() {
    let mut s = fresh();
    s.players[0].workers = 30;
    s.tick();
    // One base, no gas: 16 mineral workers earn, the rest idle.
    assert_eq!(s.players[0].minerals, 50 + MINERAL_WORKERS_PER_BASE);
    for p in PlayerId::both() {
        let st = s.player(p);
        assert_eq!(st.minerals_mined, st.minerals as u64 + st.total_minerals_spent);
    }
}

#[test]
fn draw_at_max_ticks() {
    let cfg = MatchConfig { max_ticks: 5, ..MatchConfig::default() };
    let mut s = new_match(&cfg, 1).unwrap();
    for _ in 0..4 {
        assert!(s.tick().iter().all(|e| !matches!(e, GameEvent::Terminal { .. })));
    }
    let events = s.tick();
    assert!(events.iter().any(|e| matches!(e, GameEvent::Terminal { outcome: Outcome::Draw, .. })));
    assert_eq!(s.outcome(PlayerId::P1), Some(0));
    assert_eq!(s.outcome(PlayerId::P2), Some(0));
    assert!(s.legal_actions(PlayerId::P1).is_empty());
    let before = s.tick;
    let w = s.tick();
    assert!(matches!(w[..], [GameEvent::Warning { .. }]));
    assert_eq!(s.tick, before);
}

#[test]
fn empty_armies_produce_no_combat() {
    let mut s = fresh();
    for _ in 0..50 {
        let events = s.tick();
        assert!(events.iter().all(|e| !matches!(e, GameEvent::Combat { .. })));
    }
}

#[test]
fn destroying_town_halls_and_production_wins() {
    let mut s = fresh();
    let main2 = s.map().home(PlayerId::P2);
    // A large Protoss force dropped into the Zerg main.
    let stalker = id(&s, "STALKER");
    s.players[0].units.entry(main2).or_default().insert(stalker, Stack { count: 40, damage: 0.0 });
    s.players[0].army_order = ArmyOrder::Attack(main2);
    let mut outcome = None;
    for _ in 0..400 {
        for e in s.tick() {
            if let GameEvent::Terminal { outcome: o, .. } = e {
                outcome = Some(o);
            }
        }
        if s.is_terminal() {
            break;
        }
    }
    assert_eq!(outcome, Some(Outcome::Win(PlayerId::P1)));
    assert_eq!(s.outcome(PlayerId::P1), Some(1));
    assert_eq!(s.outcome(PlayerId::P2), Some(-1));
}

#[test]
fn scout_reveals_enemy_main_then_memory_expires() {
    let mut s = fresh();
    assert!(s.observe(PlayerId::P1).enemy.is_empty());
    assert!(s.apply_macro(PlayerId::P1, &MacroAction::Other(OtherAction::Scout)).accepted);
    let distance = s.map().distance(s.map().home(PlayerId::P1), s.map().home(PlayerId::P2));
    let mut seen_at = None;
    for _ in 0..distance + 20 {
        s.tick();
        let obs = s.observe(PlayerId::P1);
        if obs.enemy.iter().any(|l| l.name == "Hatchery" && l.region == Region::EnemyMain) {
            seen_at = Some(s.tick);
            assert!(obs.enemy.iter().any(|l| l.name == "Drone"));
            break;
        }
    }
    let seen_at = seen_at.expect("scout reaches the enemy main");
    assert!(seen_at >= distance);

    // Remove the scout: the sighting ages out after the staleness window.
    s.players[0].scouts.clear();
    s.players[0].transits.clear();
    for _ in 0..s.staleness_window {
        s.tick();
        let obs = s.observe(PlayerId::P1);
        assert!(obs.enemy.iter().all(|l| l.age > 0 || l.region != Region::EnemyMain));
    }
    s.tick();
    assert!(s.observe(PlayerId::P1).enemy.is_empty());
    assert!(s.observe_full(PlayerId::P1).enemy.iter().any(|l| l.name == "Hatchery"));
}

#[test]
fn own_side_observation_is_complete() {
    let s = fresh();
    let obs = s.observe(PlayerId::P1);
    assert_eq!(obs.units.len(), s.tree().of_race(Race::Protoss, crate::techtree::Category::Unit).count());
    let probe = obs.units.iter().find(|l| l.name == "Probe").unwrap();
    assert_eq!(probe.count, 12);
    assert_eq!(obs.resources.supply_used, 12);
    assert_eq!(obs.resources.supply_cap, 15);
    assert_eq!(obs.resources.larva, None);
    assert_eq!(s.observe(PlayerId::P2).resources.larva, Some(3));
}

#[test]
fn expansion_and_gas_placement() {
    let mut s = fresh();
    s.players[0].minerals = 10_000;
    let expand = MacroAction::Other(OtherAction::ExpandToNewResourceLocation);
    assert!(s.apply_macro(PlayerId::P1, &expand).accepted);
    let natural = s.map().node(PlayerId::P1, Region::Natural);
    assert_eq!(s.players[0].in_process[0].node, natural);
    assert!(s.apply_macro(PlayerId::P1, &expand).accepted);
    assert_eq!(s.players[0].in_process[1].node, s.map().node(PlayerId::P1, Region::Third));

    let gas = MacroAction::BuildStructure(id(&s, "ASSIMILATOR"), None);
    assert!(s.apply_macro(PlayerId::P1, &gas).accepted);
    assert!(s.apply_macro(PlayerId::P1, &gas).accepted);
    assert_eq!(s.apply_macro(PlayerId::P1, &gas).reason.as_deref(), Some("no valid placement"));
}

#[test]
fn attack_requires_army_and_moves_along_graph() {
    let mut s = fresh();
    let attack = MacroAction::Other(OtherAction::AttackRegion(Region::Center));
    assert_eq!(s.apply_macro(PlayerId::P1, &attack).reason.as_deref(), Some("no army"));
    let zealot = id(&s, "ZEALOT");
    let home = s.map().home(PlayerId::P1);
    s.players[0].units.entry(home).or_default().insert(zealot, Stack { count: 2, damage: 0.0 });
    assert!(s.apply_macro(PlayerId::P1, &attack).accepted);
    let center = s.map().node(PlayerId::P1, Region::Center);
    let d = s.map().distance(home, center);
    for _ in 0..d + 5 {
        s.tick();
    }
    assert_eq!(s.players[0].units.get(&center).and_then(|b| b.get(&zealot)).map(|x| x.count), Some(2));
    assert!(s.apply_macro(PlayerId::P1, &MacroAction::Other(OtherAction::RetreatHome)).accepted);
    for _ in 0..d + 5 {
        s.tick();
    }
    assert_eq!(s.players[0].units.get(&home).and_then(|b| b.get(&zealot)).map(|x| x.count), Some(2));
    assert_eq!(s.players[0].army_order, ArmyOrder::Hold);
}

#[test]
fn tokens_are_canonical() {
    let s = fresh();
    let t = |a: MacroAction| a.token(s.tree());
    assert_eq!(t(MacroAction::BuildStructure(id(&s, "PYLON"), None)), "BUILD PYLON");
    assert_eq!(t(MacroAction::TrainUnit(id(&s, "STALKER"))), "TRAIN STALKER");
    assert_eq!(t(MacroAction::Other(OtherAction::ChronoBoost(id(&s, "NEXUS")))), "CHRONOBOOST NEXUS");
    assert_eq!(t(MacroAction::Research(id(&s, "PSISTORMTECH"))), "RESEARCH PSISTORMTECH");
    assert_eq!(t(MacroAction::Other(OtherAction::ExpandToNewResourceLocation)), "EXPAND TO NEW RESOURCE LOCATION");
    assert_eq!(
        t(MacroAction::BuildStructure(id(&s, "PHOTONCANNON"), Some(Region::Natural))),
        "BUILD PHOTONCANNON AT NATURAL"
    );
}
