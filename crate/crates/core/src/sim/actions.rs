//! Macro commands: validation, execution and canonical tokens.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    ArmyOrder, GameState, ProductionItem, CHRONO_COOLDOWN, CHRONO_CUT_PERCENT, INJECT_COOLDOWN, INJECT_LARVA,
    MAX_GAS_BUILDINGS_PER_BASE, MAX_SUPPLY,
};
use crate::map::{Node, PlayerId, Region};
use crate::techtree::{Category, EntityId, Race, TechTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg", rename_all = "snake_case")]
pub enum OtherAction {
    Scout,
    ExpandToNewResourceLocation,
    ChronoBoost(EntityId),
    InjectLarva,
    AttackRegion(Region),
    RetreatHome,
    NoOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "category", content = "action", rename_all = "snake_case")]
pub enum MacroAction {
    TrainUnit(EntityId),
    /// Building kind and an optional placement; automatic placement when absent.
    BuildStructure(EntityId, Option<Region>),
    Research(EntityId),
    Other(OtherAction),
}

impl MacroAction {
    pub const NOOP: MacroAction = MacroAction::Other(OtherAction::NoOp);

    pub fn is_noop(&self) -> bool {
        *self == Self::NOOP
    }

    /// Canonical uppercase token, e.g. `BUILD PYLON` or `ATTACK ENEMY NATURAL`.
    pub fn token(&self, tree: &TechTree) -> String {
        let key = |id: &EntityId| tree.entity(*id).key.as_str();
        match self {
            MacroAction::TrainUnit(id) => format!("TRAIN {}", key(id)),
            MacroAction::BuildStructure(id, None) => format!("BUILD {}", key(id)),
            MacroAction::BuildStructure(id, Some(r)) => format!("BUILD {} AT {}", key(id), r.token()),
            MacroAction::Research(id) => format!("RESEARCH {}", key(id)),
            MacroAction::Other(o) => match o {
                OtherAction::Scout => "SCOUT".into(),
                OtherAction::ExpandToNewResourceLocation => "EXPAND TO NEW RESOURCE LOCATION".into(),
                OtherAction::ChronoBoost(id) => format!("CHRONOBOOST {}", key(id)),
                OtherAction::InjectLarva => "INJECTLARVA".into(),
                OtherAction::AttackRegion(r) => format!("ATTACK {}", r.token()),
                OtherAction::RetreatHome => "RETREAT HOME".into(),
                OtherAction::NoOp => "EMPTY ACTION".into(),
            },
        }
    }

    /// The race able to issue this action; `None` for race-neutral commands.
    pub fn race(&self, tree: &TechTree) -> Option<Race> {
        match self {
            MacroAction::TrainUnit(id) | MacroAction::BuildStructure(id, _) | MacroAction::Research(id) => {
                Some(tree.entity(*id).race)
            }
            MacroAction::Other(OtherAction::ChronoBoost(_)) => Some(Race::Protoss),
            MacroAction::Other(OtherAction::InjectLarva) => Some(Race::Zerg),
            MacroAction::Other(_) => None,
        }
    }
}

/// Why a macro command was refused. The state is left untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    GameOver,
    WrongRace,
    WrongCategory,
    MissingPrerequisite(String),
    MissingProducer(String),
    ProducerBusy,
    NoLarva,
    NoWorker,
    NotEnoughMinerals,
    NotEnoughGas,
    SupplyBlocked,
    NoPlacement,
    AlreadyResearched,
    AlreadyInProgress,
    AbilityNotReady,
    NoTarget,
    NoArmy,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::GameOver => write!(f, "game is over"),
            Rejection::WrongRace => write!(f, "not available to this race"),
            Rejection::WrongCategory => write!(f, "wrong action category"),
            Rejection::MissingPrerequisite(k) => write!(f, "missing prerequisite {k}"),
            Rejection::MissingProducer(k) => write!(f, "missing producer {k}"),
            Rejection::ProducerBusy => write!(f, "producer busy"),
            Rejection::NoLarva => write!(f, "no larva"),
            Rejection::NoWorker => write!(f, "no worker available"),
            Rejection::NotEnoughMinerals => write!(f, "not enough minerals"),
            Rejection::NotEnoughGas => write!(f, "not enough gas"),
            Rejection::SupplyBlocked => write!(f, "supply blocked"),
            Rejection::NoPlacement => write!(f, "no valid placement"),
            Rejection::AlreadyResearched => write!(f, "already researched"),
            Rejection::AlreadyInProgress => write!(f, "already in progress"),
            Rejection::AbilityNotReady => write!(f, "ability not ready"),
            Rejection::NoTarget => write!(f, "no target"),
            Rejection::NoArmy => write!(f, "no army"),
        }
    }
}

/// Outcome of one macro command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub tick: u32,
    pub player: PlayerId,
    pub action: MacroAction,
    pub token: String,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

/// A validated command, ready to mutate the state.
enum Plan {
    Enqueue { entity: EntityId, node: Node, producer: Option<EntityId>, ticks: u32, larva: bool },
    Scout,
    Chrono { hall: usize, item: usize, cut: u32 },
    Inject { hall: usize },
    Order(ArmyOrder),
    Nothing,
}

impl GameState {
    /// Applies one macro command for `player`. Illegal commands leave the state unchanged.
    pub fn apply_macro(&mut self, player: PlayerId, action: &MacroAction) -> ActionEvent {
        let result = self.plan(player, action);
        let accepted = result.is_ok();
        let reason = result.as_ref().err().map(|r| r.to_string());
        if let Ok(plan) = result {
            self.execute(player, plan);
        }
        ActionEvent { tick: self.tick, player, action: *action, token: action.token(&self.tree), accepted, reason }
    }

    /// Validates a command without applying it.
    pub fn check(&self, player: PlayerId, action: &MacroAction) -> Result<(), Rejection> {
        self.plan(player, action).map(|_| ())
    }

    /// Every command `player` could issue now; empty once the game is over.
    pub fn legal_actions(&self, player: PlayerId) -> Vec<MacroAction> {
        if self.is_terminal() {
            return Vec::new();
        }
        self.candidate_actions(player).into_iter().filter(|a| self.check(player, a).is_ok()).collect()
    }

    /// Every command shape meaningful for the player's race, legal or not.
    pub fn candidate_actions(&self, player: PlayerId) -> Vec<MacroAction> {
        let race = self.players[player.index()].race;
        let tree = &self.tree;
        let mut out = Vec::new();
        out.extend(tree.of_race(race, Category::Unit).map(|e| MacroAction::TrainUnit(e.id)));
        out.extend(tree.of_race(race, Category::Building).map(|e| MacroAction::BuildStructure(e.id, None)));
        out.extend(tree.of_race(race, Category::Tech).map(|e| MacroAction::Research(e.id)));
        out.push(MacroAction::Other(OtherAction::Scout));
        out.push(MacroAction::Other(OtherAction::ExpandToNewResourceLocation));
        if race == Race::Protoss {
            out.extend(
                tree.of_race(race, Category::Building)
                    .filter(|e| produces_anything(tree, e.id))
                    .map(|e| MacroAction::Other(OtherAction::ChronoBoost(e.id))),
            );
        }
        if race == Race::Zerg {
            out.push(MacroAction::Other(OtherAction::InjectLarva));
        }
        out.extend(Region::ALL.iter().map(|r| MacroAction::Other(OtherAction::AttackRegion(*r))));
        out.push(MacroAction::Other(OtherAction::RetreatHome));
        out.push(MacroAction::NOOP);
        out
    }

    fn plan(&self, p: PlayerId, action: &MacroAction) -> Result<Plan, Rejection> {
        if self.is_terminal() {
            return Err(Rejection::GameOver);
        }
        match *action {
            MacroAction::TrainUnit(id) => self.plan_train(p, id),
            MacroAction::BuildStructure(id, at) => self.plan_build(p, id, at),
            MacroAction::Research(id) => self.plan_research(p, id),
            MacroAction::Other(o) => self.plan_other(p, o),
        }
    }

    fn check_entity(&self, p: PlayerId, id: EntityId, category: Category) -> Result<(), Rejection> {
        let e = self.tree.entity(id);
        if e.race != self.players[p.index()].race {
            return Err(Rejection::WrongRace);
        }
        if e.category != category {
            return Err(Rejection::WrongCategory);
        }
        for r in &e.requires {
            if !self.has_completed(p, *r) {
                return Err(Rejection::MissingPrerequisite(self.tree.entity(*r).key.clone()));
            }
        }
        Ok(())
    }

    fn check_cost(&self, p: PlayerId, id: EntityId) -> Result<(), Rejection> {
        let e = self.tree.entity(id);
        let st = &self.players[p.index()];
        if st.minerals < e.minerals {
            return Err(Rejection::NotEnoughMinerals);
        }
        if st.gas < e.gas {
            return Err(Rejection::NotEnoughGas);
        }
        Ok(())
    }

    /// Nearest node holding an idle completed `producer`.
    fn idle_producer(&self, p: PlayerId, producer: EntityId) -> Result<Node, Rejection> {
        let total = self.completed_count(p, producer);
        if total == 0 {
            return Err(Rejection::MissingProducer(self.tree.entity(producer).key.clone()));
        }
        let busy = self.players[p.index()].in_process.iter().filter(|i| i.producer == Some(producer)).count() as u32;
        if busy >= total {
            return Err(Rejection::ProducerBusy);
        }
        Ok(self.producer_node(p, producer))
    }

    fn producer_node(&self, p: PlayerId, producer: EntityId) -> Node {
        let st = &self.players[p.index()];
        self.map
            .nodes_by_distance(p)
            .into_iter()
            .find(|n| st.buildings.get(n).and_then(|b| b.get(&producer)).is_some_and(|s| s.count > 0))
            .unwrap_or_else(|| self.map.home(p))
    }

    fn plan_train(&self, p: PlayerId, id: EntityId) -> Result<Plan, Rejection> {
        self.check_entity(p, id, Category::Unit)?;
        let e = self.tree.entity(id);
        let node = if e.flags.larva {
            if self.completed_count(p, e.producer) == 0 {
                return Err(Rejection::MissingProducer(self.tree.entity(e.producer).key.clone()));
            }
            self.producer_node(p, e.producer)
        } else {
            self.idle_producer(p, e.producer)?
        };
        self.check_cost(p, id)?;
        let provided = self.supply_provided(p).min(MAX_SUPPLY);
        if e.supply > 0 && self.supply_used(p) + self.supply_reserved(p) + e.supply > provided {
            return Err(Rejection::SupplyBlocked);
        }
        if e.flags.larva && self.players[p.index()].larva == 0 {
            return Err(Rejection::NoLarva);
        }
        Ok(Plan::Enqueue {
            entity: id,
            node,
            producer: if e.flags.larva { None } else { Some(e.producer) },
            ticks: self.production_ticks(p, id),
            larva: e.flags.larva,
        })
    }

    /// Build time after research speed bonuses; never below one tick.
    fn production_ticks(&self, p: PlayerId, id: EntityId) -> u32 {
        let e = self.tree.entity(id);
        let m = self.tree.modifiers(id, &self.players[p.index()].research_done);
        let scaled = (e.ticks as f64 * (1.0 - m.speed.clamp(0.0, 0.9))).floor() as u32;
        scaled.max(1)
    }

    fn plan_build(&self, p: PlayerId, id: EntityId, at: Option<Region>) -> Result<Plan, Rejection> {
        self.check_entity(p, id, Category::Building)?;
        if self.players[p.index()].workers == 0 {
            return Err(Rejection::NoWorker);
        }
        let node = self.placement(p, id, at)?;
        self.check_cost(p, id)?;
        Ok(Plan::Enqueue { entity: id, node, producer: None, ticks: self.production_ticks(p, id), larva: false })
    }

    /// Where a building of kind `id` goes.
    fn placement(&self, p: PlayerId, id: EntityId, at: Option<Region>) -> Result<Node, Rejection> {
        let e = self.tree.entity(id);
        let bases = self.base_nodes(p);
        if e.flags.townhall {
            let free = self.free_expansions(p);
            return match at {
                None => free.first().copied().ok_or(Rejection::NoPlacement),
                Some(r) => {
                    let n = self.map.node(p, r);
                    free.contains(&n).then_some(n).ok_or(Rejection::NoPlacement)
                }
            };
        }
        let candidates: Vec<Node> = match at {
            Some(r) => {
                let n = self.map.node(p, r);
                bases.iter().copied().filter(|b| *b == n).collect()
            }
            None if e.flags.gas => bases.clone(),
            None if e.flags.defense => self.front_bases(p),
            None => bases.clone(),
        };
        if e.flags.gas {
            let st = &self.players[p.index()];
            return candidates
                .into_iter()
                .find(|n| {
                    let done = st.buildings.get(n).and_then(|b| b.get(&id)).map(|s| s.count).unwrap_or(0);
                    let building = st.in_process.iter().filter(|i| i.entity == id && i.node == *n).count() as u32;
                    done + building < MAX_GAS_BUILDINGS_PER_BASE
                })
                .ok_or(Rejection::NoPlacement);
        }
        candidates.first().copied().ok_or(Rejection::NoPlacement)
    }

    /// Bases ordered by exposure: closest to the map centre first, outer bases winning ties.
    fn front_bases(&self, p: PlayerId) -> Vec<Node> {
        let center = self.map.node(p, Region::Center);
        let home = self.map.home(p);
        let mut bases = self.base_nodes(p);
        bases.sort_by_key(|n| (self.map.distance(*n, center), std::cmp::Reverse(self.map.distance(home, *n))));
        bases
    }

    fn plan_research(&self, p: PlayerId, id: EntityId) -> Result<Plan, Rejection> {
        self.check_entity(p, id, Category::Tech)?;
        let st = &self.players[p.index()];
        if st.research_done.contains(&id) {
            return Err(Rejection::AlreadyResearched);
        }
        if st.in_process.iter().any(|i| i.entity == id) {
            return Err(Rejection::AlreadyInProgress);
        }
        let e = self.tree.entity(id);
        let node = self.idle_producer(p, e.producer)?;
        self.check_cost(p, id)?;
        Ok(Plan::Enqueue { entity: id, node, producer: Some(e.producer), ticks: e.ticks, larva: false })
    }

    fn plan_other(&self, p: PlayerId, o: OtherAction) -> Result<Plan, Rejection> {
        let st = &self.players[p.index()];
        match o {
            OtherAction::NoOp => Ok(Plan::Nothing),
            OtherAction::Scout => {
                if st.workers == 0 || self.base_nodes(p).is_empty() {
                    return Err(Rejection::NoWorker);
                }
                Ok(Plan::Scout)
            }
            OtherAction::ExpandToNewResourceLocation => {
                let th = self.tree.town_hall(st.race).ok_or(Rejection::WrongRace)?;
                self.plan_build(p, th, None)
            }
            OtherAction::ChronoBoost(target) => {
                if st.race != Race::Protoss {
                    return Err(Rejection::WrongRace);
                }
                let e = self.tree.entity(target);
                if e.race != st.race || !e.is_building() {
                    return Err(Rejection::WrongCategory);
                }
                let hall = st.ability_cooldowns.iter().position(|c| *c == 0).ok_or(Rejection::AbilityNotReady)?;
                let (item, cut) = st
                    .in_process
                    .iter()
                    .enumerate()
                    .filter(|(_, i)| i.producer == Some(target))
                    .map(|(k, i)| (k, i.remaining_ticks * CHRONO_CUT_PERCENT / 100))
                    .find(|(_, cut)| *cut > 0)
                    .ok_or(Rejection::NoTarget)?;
                Ok(Plan::Chrono { hall, item, cut })
            }
            OtherAction::InjectLarva => {
                if !self.uses_larva(p) {
                    return Err(Rejection::WrongRace);
                }
                let hall = st.ability_cooldowns.iter().position(|c| *c == 0).ok_or(Rejection::AbilityNotReady)?;
                Ok(Plan::Inject { hall })
            }
            OtherAction::AttackRegion(r) => {
                if !self.army_present(p) {
                    return Err(Rejection::NoArmy);
                }
                Ok(Plan::Order(ArmyOrder::Attack(self.map.node(p, r))))
            }
            OtherAction::RetreatHome => {
                if !self.army_present(p) {
                    return Err(Rejection::NoArmy);
                }
                Ok(Plan::Order(ArmyOrder::Retreat))
            }
        }
    }

    fn execute(&mut self, p: PlayerId, plan: Plan) {
        let scout_from = self.base_nodes(p).first().copied();
        let worker = self.tree.worker(self.players[p.index()].race);
        let st = &mut self.players[p.index()];
        match plan {
            Plan::Nothing => {}
            Plan::Enqueue { entity, node, producer, ticks, larva } => {
                let e = self.tree.entity(entity);
                st.minerals -= e.minerals;
                st.gas -= e.gas;
                st.total_minerals_spent += e.minerals as u64;
                st.total_gas_spent += e.gas as u64;
                if larva {
                    st.larva -= 1;
                }
                st.in_process.push(ProductionItem { entity, remaining_ticks: ticks, node, producer });
            }
            Plan::Scout => {
                let (Some(from), Some(w)) = (scout_from, worker) else {
                    return;
                };
                st.workers -= 1;
                super::bag_add(st.scouts.entry(from).or_default(), w, super::Stack { count: 1, damage: 0.0 });
            }
            Plan::Chrono { hall, item, cut } => {
                st.ability_cooldowns[hall] = CHRONO_COOLDOWN;
                st.in_process[item].remaining_ticks -= cut;
            }
            Plan::Inject { hall } => {
                st.ability_cooldowns[hall] = INJECT_COOLDOWN;
                st.larva += INJECT_LARVA;
            }
            Plan::Order(order) => st.army_order = order,
        }
    }
}

fn produces_anything(tree: &TechTree, building: EntityId) -> bool {
    tree.entities().iter().any(|e| !e.is_building() && e.producer == building)
}
