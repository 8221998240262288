//! Player-visible snapshots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GameState;
use crate::map::{PlayerId, Region};
use crate::techtree::{Category, EntityId, Race};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourcesView {
    pub minerals: u32,
    pub gas: u32,
    pub supply_used: u32,
    pub supply_cap: u32,
    pub army_supply: u32,
    pub workers: u32,
    pub bases: u32,
    /// Town halls whose ability (chrono boost / inject larva) is off cooldown.
    pub ability_ready: u32,
    /// Present for races that produce from larvae.
    pub larva: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountLine {
    pub entity: EntityId,
    pub name: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InProcessLine {
    pub entity: EntityId,
    pub name: String,
    /// Remaining ticks of each item of this kind, soonest first.
    pub remaining: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnemyLine {
    pub entity: EntityId,
    pub name: String,
    pub count: u32,
    pub region: Region,
    /// Ticks since the sighting; 0 while the region is in view.
    pub age: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "remaining", rename_all = "snake_case")]
pub enum ResearchStatus {
    Done,
    InProgress(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchLine {
    pub entity: EntityId,
    pub name: String,
    pub status: ResearchStatus,
}

/// Army supply stationed in, or heading to, a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmyLine {
    pub region: Region,
    pub supply: u32,
    pub moving: bool,
}

/// The six-category view one player has of the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tick: u32,
    pub player: PlayerId,
    pub race: Race,
    pub resources: ResourcesView,
    /// Every unit kind of the race, zero counts included.
    pub units: Vec<CountLine>,
    /// Every building kind of the race, zero counts included.
    pub buildings: Vec<CountLine>,
    /// Own army positions, nearest region first.
    pub army: Vec<ArmyLine>,
    pub in_process: Vec<InProcessLine>,
    pub enemy: Vec<EnemyLine>,
    pub research: Vec<ResearchLine>,
    /// True when enemy status is ground truth rather than fog-filtered memory.
    pub full_information: bool,
}

impl GameState {
    /// Fog-filtered observation for `player`.
    pub fn observe(&self, player: PlayerId) -> Observation {
        let mut obs = self.own_view(player);
        let st = &self.players[player.index()];
        for (node, sighting) in &st.sightings {
            let age = self.tick - sighting.tick;
            if age > self.staleness_window {
                continue;
            }
            for (id, count) in &sighting.entities {
                obs.enemy.push(EnemyLine {
                    entity: *id,
                    name: self.tree.entity(*id).display.clone(),
                    count: *count,
                    region: self.map.region(player, *node),
                    age,
                });
            }
        }
        sort_enemy(&mut obs.enemy);
        obs
    }

    /// Observation with the true enemy state in place of fogged memory.
    pub fn observe_full(&self, player: PlayerId) -> Observation {
        let mut obs = self.own_view(player);
        for node in self.map.nodes() {
            for (id, count) in self.presence(player.other(), node) {
                obs.enemy.push(EnemyLine {
                    entity: id,
                    name: self.tree.entity(id).display.clone(),
                    count,
                    region: self.map.region(player, node),
                    age: 0,
                });
            }
        }
        // Moving units are not at any node; report them at their destination.
        for t in &self.players[player.other().index()].transits {
            for (id, s) in &t.units {
                obs.enemy.push(EnemyLine {
                    entity: *id,
                    name: self.tree.entity(*id).display.clone(),
                    count: s.count,
                    region: self.map.region(player, t.to),
                    age: 0,
                });
            }
        }
        sort_enemy(&mut obs.enemy);
        obs.full_information = true;
        obs
    }

    fn own_view(&self, player: PlayerId) -> Observation {
        let st = &self.players[player.index()];
        let race = st.race;
        let units = self
            .tree
            .of_race(race, Category::Unit)
            .map(|e| CountLine { entity: e.id, name: e.display.clone(), count: self.unit_count(player, e.id) })
            .collect();
        let buildings = self
            .tree
            .of_race(race, Category::Building)
            .map(|e| CountLine { entity: e.id, name: e.display.clone(), count: self.completed_count(player, e.id) })
            .collect();
        let mut grouped: BTreeMap<EntityId, Vec<u32>> = BTreeMap::new();
        for item in &st.in_process {
            grouped.entry(item.entity).or_default().push(item.remaining_ticks);
        }
        let in_process = grouped
            .into_iter()
            .map(|(id, mut remaining)| {
                remaining.sort_unstable();
                InProcessLine { entity: id, name: self.tree.entity(id).display.clone(), remaining }
            })
            .collect();
        let research = self
            .tree
            .of_race(race, Category::Tech)
            .filter_map(|e| {
                let status = if st.research_done.contains(&e.id) {
                    ResearchStatus::Done
                } else {
                    let item = st.in_process.iter().find(|i| i.entity == e.id)?;
                    ResearchStatus::InProgress(item.remaining_ticks)
                };
                Some(ResearchLine { entity: e.id, name: e.display.clone(), status })
            })
            .collect();
        let mut army: BTreeMap<(Region, bool), u32> = BTreeMap::new();
        let stationed = st.units.iter().map(|(n, b)| (*n, b, false));
        let moving = st.transits.iter().filter(|t| !t.scout).map(|t| (t.to, &t.units, true));
        for (node, bag, is_moving) in stationed.chain(moving) {
            let supply: u32 = bag
                .iter()
                .map(|(id, s)| (self.tree.entity(*id), s.count))
                .filter(|(e, _)| e.is_army())
                .map(|(e, n)| e.supply * n)
                .sum();
            if supply > 0 {
                *army.entry((self.map.region(player, node), is_moving)).or_insert(0) += supply;
            }
        }
        let army = army.into_iter().map(|((region, moving), supply)| ArmyLine { region, supply, moving }).collect();
        Observation {
            tick: self.tick,
            player,
            race,
            resources: ResourcesView {
                minerals: st.minerals,
                gas: st.gas,
                supply_used: self.supply_used(player),
                supply_cap: self.supply_cap(player),
                army_supply: self.army_supply(player),
                workers: self.worker_count(player),
                bases: self.town_hall_count(player),
                ability_ready: st.ability_cooldowns.iter().filter(|c| **c == 0).count() as u32,
                larva: self.uses_larva(player).then_some(st.larva),
            },
            units,
            buildings,
            army,
            in_process,
            enemy: Vec::new(),
            research,
            full_information: false,
        }
    }
}

fn sort_enemy(lines: &mut [EnemyLine]) {
    lines.sort_by(|a, b| b.region.cmp(&a.region).then(a.entity.cmp(&b.entity)));
}
