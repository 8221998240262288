//! Fixed Zerg macro script for the built-in opponent.

use rand::Rng;

use super::DifficultyParams;
use crate::map::Region;
use crate::sim::{MacroAction, Observation, OtherAction};
use crate::techtree::{EntityId, TechTree};

/// Ticks between attack waves after the first.
pub const WAVE_INTERVAL: u32 = 300;
/// Minimum army supply before a wave is sent.
const WAVE_MIN_SUPPLY: u32 = 8;
const MAX_BASES: u32 = 3;
const WORKER_CAP: u32 = 60;
/// Order in which enemy bases are pushed during a wave.
const PUSH_ORDER: [Region; 3] = [Region::EnemyNatural, Region::EnemyMain, Region::EnemyThird];

struct Keys {
    drone: EntityId,
    overlord: EntityId,
    zergling: EntityId,
    queen: EntityId,
    roach: EntityId,
    hydralisk: EntityId,
    hatchery: EntityId,
    extractor: EntityId,
    pool: EntityId,
    evo: EntityId,
    warren: EntityId,
    lair: EntityId,
    den: EntityId,
    ling_speed: EntityId,
    glial: EntityId,
    missile: EntityId,
}

impl Keys {
    fn new(tree: &TechTree) -> Keys {
        let k = |key: &str| tree.id(key).unwrap_or_else(|| panic!("tech tree lacks {key}"));
        Keys {
            drone: k("DRONE"),
            overlord: k("OVERLORD"),
            zergling: k("ZERGLING"),
            queen: k("QUEEN"),
            roach: k("ROACH"),
            hydralisk: k("HYDRALISK"),
            hatchery: k("HATCHERY"),
            extractor: k("EXTRACTOR"),
            pool: k("SPAWNINGPOOL"),
            evo: k("EVOLUTIONCHAMBER"),
            warren: k("ROACHWARREN"),
            lair: k("LAIR"),
            den: k("HYDRALISKDEN"),
            ling_speed: k("ZERGLINGMOVEMENTSPEED"),
            glial: k("GLIALRECONSTITUTION"),
            missile: k("ZERGMISSILEWEAPONSLEVEL1"),
        }
    }
}

fn count(view: &Observation, id: EntityId) -> u32 {
    view.units.iter().chain(view.buildings.iter()).find(|l| l.entity == id).map(|l| l.count).unwrap_or(0)
}

fn pending(view: &Observation, id: EntityId) -> u32 {
    view.in_process.iter().find(|l| l.entity == id).map(|l| l.remaining.len() as u32).unwrap_or(0)
}

fn researched(view: &Observation, id: EntityId) -> bool {
    view.research.iter().any(|r| r.entity == id)
}

/// One decision of the built-in Zerg: an ordered wish list, applied first to last.
///
/// `view` is fog-filtered unless the level grants vision, in which case the caller passes
/// the full-information observation.
pub fn builtin_policy(
    view: &Observation,
    params: &DifficultyParams,
    tree: &TechTree,
    rng: &mut impl Rng,
) -> Vec<MacroAction> {
    let k = Keys::new(tree);
    let r = &view.resources;
    let have = |id| count(view, id) + pending(view, id) > 0;
    let done = |id| count(view, id) > 0;
    let build = |id| MacroAction::BuildStructure(id, None);
    let train = MacroAction::TrainUnit;
    let mut out = Vec::new();

    let bases = r.bases + pending(view, k.hatchery);
    let extractors = count(view, k.extractor) + pending(view, k.extractor);
    let worker_target = (bases * 16 + extractors * 3).min(WORKER_CAP);
    let workers = r.workers + pending(view, k.drone);
    let army_phase = view.tick + 120 >= params.aggression_tick;

    // Supply first: never float against the cap.
    let provided = r.supply_cap + 8 * pending(view, k.overlord);
    let reserved: u32 = view.in_process.iter().map(|l| tree.entity(l.entity).supply * l.remaining.len() as u32).sum();
    if provided < 200 && provided < r.supply_used + reserved + 4 + 2 * r.bases {
        out.push(train(k.overlord));
        if r.bases >= 2 {
            out.push(train(k.overlord));
        }
    }

    if count(view, k.queen) > 0 && r.ability_ready > 0 {
        out.push(MacroAction::Other(OtherAction::InjectLarva));
    }

    // Tech and economy milestones.
    if workers >= 13 && !have(k.pool) {
        out.push(build(k.pool));
    }
    if r.bases > 0 && r.workers + 3 >= r.bases * 16 && bases < MAX_BASES {
        out.push(MacroAction::Other(OtherAction::ExpandToNewResourceLocation));
    }
    if done(k.pool) && extractors < (bases * 2).min(1 + view.tick / 180) {
        out.push(build(k.extractor));
    }
    if done(k.pool) && count(view, k.queen) + pending(view, k.queen) < r.bases.min(2) {
        out.push(train(k.queen));
    }
    if done(k.pool) && workers >= 18 && !have(k.warren) {
        out.push(build(k.warren));
    }
    if done(k.pool) && !researched(view, k.ling_speed) && view.tick > 240 {
        out.push(MacroAction::Research(k.ling_speed));
    }
    if done(k.warren) && !have(k.lair) && view.tick > 360 {
        out.push(build(k.lair));
    }
    if done(k.lair) && !have(k.den) {
        out.push(build(k.den));
    }
    if done(k.lair) && done(k.warren) && !researched(view, k.glial) {
        out.push(MacroAction::Research(k.glial));
    }
    if params.level >= 4 && r.bases >= 2 && !have(k.evo) {
        out.push(build(k.evo));
    }
    if done(k.evo) && !researched(view, k.missile) {
        out.push(MacroAction::Research(k.missile));
    }

    // Larva spending: drones until saturated, army afterwards (army first once waves near).
    let larva = r.larva.unwrap_or(0);
    let army_unit = |rng: &mut dyn rand::RngCore| {
        if done(k.den) && (!done(k.warren) || rng.random_bool(0.5)) {
            k.hydralisk
        } else if done(k.warren) {
            k.roach
        } else {
            k.zergling
        }
    };
    let mut drones_wanted = worker_target.saturating_sub(workers);
    for _ in 0..larva {
        if done(k.pool) && (army_phase || drones_wanted == 0) {
            out.push(train(army_unit(rng)));
        } else if drones_wanted > 0 {
            out.push(train(k.drone));
            drones_wanted -= 1;
        }
    }

    // Home defense takes precedence over waves.
    let home = |r: Region| matches!(r, Region::Main | Region::Natural | Region::Third);
    let invaded = view.enemy.iter().any(|e| e.age == 0 && home(e.region) && tree.entity(e.entity).is_army());
    let army_out = view.army.iter().any(|a| a.moving || !home(a.region));
    if invaded {
        if army_out {
            out.push(MacroAction::Other(OtherAction::RetreatHome));
        }
    } else if view.tick >= params.aggression_tick {
        let since = view.tick - params.aggression_tick;
        let stationed: Vec<_> = view.army.iter().filter(|a| !a.moving).collect();
        if since % WAVE_INTERVAL < params.decision_period && r.army_supply >= WAVE_MIN_SUPPLY {
            out.push(MacroAction::Other(OtherAction::AttackRegion(PUSH_ORDER[0])));
        } else if let Some(front) = stationed.iter().filter(|a| PUSH_ORDER.contains(&a.region)).max_by_key(|a| a.supply)
        {
            // Push on once the current target holds no enemy structures in view.
            let cleared = !view
                .enemy
                .iter()
                .any(|e| e.region == front.region && e.age == 0 && tree.entity(e.entity).is_building());
            if cleared {
                let i = PUSH_ORDER.iter().position(|p| *p == front.region).unwrap();
                let next = PUSH_ORDER[(i + 1) % PUSH_ORDER.len()];
                out.push(MacroAction::Other(OtherAction::AttackRegion(next)));
            }
        }
    }

    if out.is_empty() {
        out.push(MacroAction::NOOP);
    }
    out
}
