//! Scripted unit-level combat shared by both players.
//!
//! One call resolves one tick of a co-located engagement as a simultaneous Lanchester-style
//! exchange. Each side's output is computed from the pre-step snapshot, then applied, so the
//! resolution is independent of which side is listed first.

use serde::{Deserialize, Serialize};

/// Target classes in the order they are focused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetClass {
    /// Armed units and defensive structures.
    Combat,
    /// Workers, scouts, overlords.
    Soft,
    Structure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombatGroup {
    pub count: u32,
    /// Damage carried by the front unit of the stack, always below `hp`.
    pub damage: f64,
    /// Effective hit points of one unit.
    pub hp: f64,
    pub dps_ground: f64,
    pub dps_air: f64,
    pub air: bool,
    pub cloaked: bool,
    pub detector: bool,
    pub class: TargetClass,
    /// Resource value of one unit; counts toward army value when `class` is `Combat`.
    pub value: f64,
}

impl CombatGroup {
    pub fn remaining_hp(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.count as f64 * self.hp - self.damage
        }
    }

    fn armed(&self) -> bool {
        self.count > 0 && (self.dps_ground > 0.0 || self.dps_air > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EngagementSide {
    pub groups: Vec<CombatGroup>,
    /// Fraction of incoming damage absorbed (shield-battery style aura).
    pub damage_reduction: f64,
    /// False at the side's own bases, where it always holds.
    pub may_retreat: bool,
}

impl EngagementSide {
    pub fn army_value(&self) -> f64 {
        self.groups.iter().filter(|g| g.class == TargetClass::Combat).map(|g| g.count as f64 * g.value).sum()
    }

    fn has_detection(&self) -> bool {
        self.groups.iter().any(|g| g.count > 0 && g.detector)
    }

    fn is_empty(&self) -> bool {
        self.groups.iter().all(|g| g.count == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EngagementState {
    pub sides: [EngagementSide; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroPolicy {
    /// A side retreats once its army value falls below this fraction of the opposing army value.
    pub retreat_threshold: f64,
    /// Upper bound on any damage-reduction aura.
    pub max_damage_reduction: f64,
}

impl Default for MicroPolicy {
    fn default() -> Self {
        MicroPolicy { retreat_threshold: 0.4, max_damage_reduction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SideOutcome {
    /// Post-step `(count, damage)` per input group, same order as the input.
    pub groups: Vec<(u32, f64)>,
    pub losses: Vec<u32>,
    pub damage_taken: f64,
    pub retreat: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EngagementResolution {
    pub sides: [SideOutcome; 2],
    /// No further exchange is possible after this step.
    pub ended: bool,
}

/// Damage one side deals this tick, split by target layer, after the defender's aura.
fn outgoing(attacker: &EngagementSide, defender: &EngagementSide, policy: &MicroPolicy) -> (f64, f64) {
    let detect = attacker.has_detection();
    let visible = |g: &&CombatGroup| g.count > 0 && (!g.cloaked || detect);
    let air_hp: f64 = defender.groups.iter().filter(visible).filter(|g| g.air).map(|g| g.remaining_hp()).sum();
    let ground_present = defender.groups.iter().filter(visible).any(|g| !g.air);
    let keep = 1.0 - defender.damage_reduction.clamp(0.0, policy.max_damage_reduction);

    let armed = || attacker.groups.iter().filter(|g| g.count > 0);
    let aa: f64 = armed().map(|g| g.count as f64 * g.dps_air).sum::<f64>() * keep;
    let ground_only: f64 =
        armed().filter(|g| g.dps_air == 0.0).map(|g| g.count as f64 * g.dps_ground).sum::<f64>() * keep;
    let ground_from_aa: f64 =
        armed().filter(|g| g.dps_air > 0.0).map(|g| g.count as f64 * g.dps_ground).sum::<f64>() * keep;

    if air_hp > 0.0 && aa > 0.0 {
        // Anti-air shooters focus air first; whatever exceeds the air pool turns on the ground.
        let to_air = aa.min(air_hp);
        let spill = (aa - to_air) / aa;
        let to_ground = if ground_present { ground_only + spill * ground_from_aa } else { 0.0 };
        (to_air, to_ground)
    } else {
        let to_ground = if ground_present { ground_only + ground_from_aa } else { 0.0 };
        (0.0, to_ground)
    }
}

fn focus_order(side: &EngagementSide, air: bool, detect: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = side
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.count > 0 && g.air == air && (!g.cloaked || detect))
        .map(|(i, _)| i)
        .collect();
    idx.sort_by(|a, b| {
        let (ga, gb) = (&side.groups[*a], &side.groups[*b]);
        ga.class.cmp(&gb.class).then(ga.hp.total_cmp(&gb.hp)).then(a.cmp(b))
    });
    idx
}

fn absorb(groups: &mut [(u32, f64)], hp: &[f64], order: &[usize], mut amount: f64) {
    for &i in order {
        if amount <= 0.0 {
            break;
        }
        let (count, damage) = &mut groups[i];
        if *count == 0 {
            continue;
        }
        let total = *damage + amount;
        let killed = ((total / hp[i]).floor() as u64).min(*count as u64) as u32;
        if killed == *count {
            amount = total - *count as f64 * hp[i];
            *count = 0;
            *damage = 0.0;
        } else {
            *count -= killed;
            *damage = total - killed as f64 * hp[i];
            amount = 0.0;
        }
    }
}

/// Resolves one tick of combat between two co-located forces.
pub fn micro_step(state: &EngagementState, policy: &MicroPolicy) -> EngagementResolution {
    let mut res = EngagementResolution::default();
    for s in 0..2 {
        let attacker = &state.sides[1 - s];
        let defender = &state.sides[s];
        let (to_air, to_ground) = outgoing(attacker, defender, policy);
        let detect = attacker.has_detection();
        let mut groups: Vec<(u32, f64)> = defender.groups.iter().map(|g| (g.count, g.damage)).collect();
        let hp: Vec<f64> = defender.groups.iter().map(|g| g.hp).collect();
        absorb(&mut groups, &hp, &focus_order(defender, true, detect), to_air);
        absorb(&mut groups, &hp, &focus_order(defender, false, detect), to_ground);
        let losses = defender.groups.iter().zip(&groups).map(|(g, (c, _))| g.count - c).collect();
        res.sides[s] = SideOutcome { groups, losses, damage_taken: to_air + to_ground, retreat: false };
    }

    let after: Vec<EngagementSide> = (0..2)
        .map(|s| {
            let mut side = state.sides[s].clone();
            for (g, (c, d)) in side.groups.iter_mut().zip(&res.sides[s].groups) {
                g.count = *c;
                g.damage = *d;
            }
            side
        })
        .collect();
    for s in 0..2 {
        let own = after[s].army_value();
        let enemy = after[1 - s].army_value();
        res.sides[s].retreat = state.sides[s].may_retreat && own > 0.0 && own < policy.retreat_threshold * enemy;
    }
    let can_hurt = |a: &EngagementSide, d: &EngagementSide| {
        let (x, y) = outgoing(a, d, policy);
        a.groups.iter().any(CombatGroup::armed) && x + y > 0.0
    };
    res.ended = after[0].is_empty()
        || after[1].is_empty()
        || (!can_hurt(&after[0], &after[1]) && !can_hurt(&after[1], &after[0]));
    res
}
