//! Deterministic macro-level RTS state machine.
//!
//! A [`GameState`] advances one game second per [`GameState::tick`]. Each tick runs, in order:
//! income, larva and ability cooldowns, production, army movement, combat, vision and the
//! terminal check. Macro commands enter through [`GameState::apply_macro`] between ticks.

mod actions;
mod observe;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::map::{MapConfig, Node, PlayerId, Region, NODE_COUNT};
use crate::opponent::micro::{micro_step, CombatGroup, EngagementSide, EngagementState, MicroPolicy, TargetClass};
use crate::techtree::{EntityId, Race, TechTree};

pub use actions::{ActionEvent, MacroAction, OtherAction, Rejection};
pub use observe::{
    ArmyLine, CountLine, EnemyLine, InProcessLine, Observation, ResearchLine, ResearchStatus, ResourcesView,
};

/// Hard population ceiling.
pub const MAX_SUPPLY: u32 = 200;
/// Mineral-line workers one town hall can use.
pub const MINERAL_WORKERS_PER_BASE: u32 = 16;
/// Workers one gas building can use.
pub const GAS_WORKERS_PER_BUILDING: u32 = 3;
pub const MAX_GAS_BUILDINGS_PER_BASE: u32 = 2;
/// Resource units one saturated worker gathers per tick, in thousandths.
pub const BASE_INCOME_MILLI: u32 = 1000;
pub const CHRONO_COOLDOWN: u32 = 30;
/// Fraction of the remaining time removed by one chrono boost, in percent.
pub const CHRONO_CUT_PERCENT: u32 = 30;
pub const INJECT_COOLDOWN: u32 = 25;
pub const INJECT_LARVA: u32 = 2;
pub const LARVA_PERIOD: u32 = 11;
pub const LARVA_PER_HATCHERY: u32 = 3;
pub const DEFAULT_MAX_TICKS: u32 = 21_600;
pub const DEFAULT_STALENESS: u32 = 45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Built-in map name or path to a map file.
    pub map: String,
    /// Optional path to a tech-tree file; the shipped tree otherwise.
    pub tech_tree: Option<String>,
    pub races: [Race; 2],
    pub max_ticks: u32,
    pub staleness_window: u32,
    /// Income multiplier per player, in thousandths.
    pub income_milli: [u32; 2],
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            map: "altitude".into(),
            tech_tree: None,
            races: [Race::Protoss, Race::Zerg],
            max_ticks: DEFAULT_MAX_TICKS,
            staleness_window: DEFAULT_STALENESS,
            income_milli: [1000, 1000],
        }
    }
}

impl MatchConfig {
    pub fn load_tech_tree(&self) -> Result<TechTree, ConfigError> {
        match &self.tech_tree {
            None => Ok(TechTree::default_tree()),
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                Ok(TechTree::parse(&text)?)
            }
        }
    }
}

/// A stack of identical entities; `damage` is carried by its front member.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub count: u32,
    pub damage: f64,
}

pub type Bag = BTreeMap<EntityId, Stack>;

fn bag_add(bag: &mut Bag, id: EntityId, stack: Stack) {
    if stack.count == 0 {
        return;
    }
    let e = bag.entry(id).or_default();
    e.count += stack.count;
    e.damage = e.damage.max(stack.damage);
}

fn bag_count(bag: &Bag) -> u32 {
    bag.values().map(|s| s.count).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transit {
    pub units: Bag,
    pub from: Node,
    pub to: Node,
    pub remaining: u32,
    pub scout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "order", content = "node", rename_all = "lowercase")]
pub enum ArmyOrder {
    Hold,
    Attack(Node),
    Defend(Node),
    Retreat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionItem {
    pub entity: EntityId,
    pub remaining_ticks: u32,
    pub node: Node,
    /// Building kind occupied by the item; `None` for larva morphs and construction.
    pub producer: Option<EntityId>,
}

/// Snapshot of enemy presence at a node, taken while the node was visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sighting {
    pub tick: u32,
    pub entities: BTreeMap<EntityId, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub race: Race,
    pub minerals: u32,
    pub gas: u32,
    pub minerals_mined: u64,
    pub gas_mined: u64,
    pub total_minerals_spent: u64,
    pub total_gas_spent: u64,
    pub income_milli: u32,
    carry_minerals: u32,
    carry_gas: u32,
    /// Workers in the economy pool (scouts excluded).
    pub workers: u32,
    /// Damage carried by the front worker of the pool.
    worker_damage: f64,
    /// Stationed non-worker units per node.
    pub units: BTreeMap<Node, Bag>,
    /// Stationed scouting workers per node.
    pub scouts: BTreeMap<Node, Bag>,
    pub transits: Vec<Transit>,
    /// Completed buildings per node.
    pub buildings: BTreeMap<Node, Bag>,
    pub in_process: Vec<ProductionItem>,
    pub research_done: BTreeSet<EntityId>,
    /// Entity kinds that have completed at least once.
    pub ever_completed: BTreeSet<EntityId>,
    /// Last tick each node was visible.
    pub scouted: BTreeMap<Node, u32>,
    pub sightings: BTreeMap<Node, Sighting>,
    pub army_order: ArmyOrder,
    pub larva: u32,
    larva_timer: u32,
    /// Ability cooldown per town hall (chrono boost or inject larva).
    pub ability_cooldowns: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "winner", rename_all = "lowercase")]
pub enum Outcome {
    Win(PlayerId),
    Draw,
}

impl Outcome {
    pub fn reward(self, player: PlayerId) -> i8 {
        match self {
            Outcome::Draw => 0,
            Outcome::Win(w) if w == player => 1,
            Outcome::Win(_) => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub entity: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameEvent {
    Completed { tick: u32, player: PlayerId, entity: String, node: Node },
    Combat { tick: u32, node: Node, losses: [Vec<Loss>; 2], retreats: [bool; 2] },
    Terminal { tick: u32, outcome: Outcome },
    Warning { tick: u32, message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct GameState {
    pub tick: u32,
    pub seed: u64,
    pub map_name: String,
    pub max_ticks: u32,
    pub staleness_window: u32,
    pub players: [PlayerState; 2],
    pub outcome: Option<Outcome>,
    #[serde(skip)]
    tree: Arc<TechTree>,
    #[serde(skip)]
    map: Arc<MapConfig>,
    #[serde(skip)]
    micro: MicroPolicy,
}

impl PartialEq for GameState {
    fn eq(&self, other: &Self) -> bool {
        self.tick == other.tick
            && self.seed == other.seed
            && self.map_name == other.map_name
            && self.max_ticks == other.max_ticks
            && self.staleness_window == other.staleness_window
            && self.players == other.players
            && self.outcome == other.outcome
    }
}

/// Starts a match from a configuration, loading its map and tech tree.
pub fn new_match(config: &MatchConfig, seed: u64) -> Result<GameState, ConfigError> {
    let map = MapConfig::load(&config.map)?;
    let tree = config.load_tech_tree()?;
    GameState::with_data(Arc::new(tree), Arc::new(map), config, seed)
}

impl GameState {
    /// Starts a match on already-loaded data.
    pub fn with_data(
        tree: Arc<TechTree>,
        map: Arc<MapConfig>,
        config: &MatchConfig,
        seed: u64,
    ) -> Result<GameState, ConfigError> {
        if config.max_ticks == 0 {
            return Err(ConfigError::Invalid("max_ticks must be positive".into()));
        }
        let mut players = Vec::with_capacity(2);
        for p in PlayerId::both() {
            let race = config.races[p.index()];
            let start = tree.start(race).ok_or_else(|| ConfigError::Invalid(format!("no start record for {race}")))?;
            let home = map.home(p);
            let mut st = PlayerState {
                race,
                minerals: start.minerals,
                gas: start.gas,
                minerals_mined: start.minerals as u64,
                gas_mined: start.gas as u64,
                total_minerals_spent: 0,
                total_gas_spent: 0,
                income_milli: BASE_INCOME_MILLI * config.income_milli[p.index()] / 1000,
                carry_minerals: 0,
                carry_gas: 0,
                workers: 0,
                worker_damage: 0.0,
                units: BTreeMap::new(),
                scouts: BTreeMap::new(),
                transits: Vec::new(),
                buildings: BTreeMap::new(),
                in_process: Vec::new(),
                research_done: BTreeSet::new(),
                ever_completed: BTreeSet::new(),
                scouted: BTreeMap::new(),
                sightings: BTreeMap::new(),
                army_order: ArmyOrder::Hold,
                larva: 0,
                larva_timer: 0,
                ability_cooldowns: Vec::new(),
            };
            for (id, n) in &start.units {
                let e = tree.entity(*id);
                if e.flags.worker {
                    st.workers += n;
                } else {
                    bag_add(st.units.entry(home).or_default(), *id, Stack { count: *n, damage: 0.0 });
                }
                st.ever_completed.insert(*id);
            }
            for (id, n) in &start.buildings {
                bag_add(st.buildings.entry(home).or_default(), *id, Stack { count: *n, damage: 0.0 });
                st.ever_completed.insert(*id);
            }
            players.push(st);
        }
        let players: [PlayerState; 2] = players.try_into().expect("two players");
        let mut state = GameState {
            tick: 0,
            seed,
            map_name: map.name.clone(),
            max_ticks: config.max_ticks,
            staleness_window: config.staleness_window,
            players,
            outcome: None,
            tree,
            map,
            micro: MicroPolicy::default(),
        };
        for p in PlayerId::both() {
            state.sync_town_halls(p);
            if state.uses_larva(p) {
                state.players[p.index()].larva = LARVA_PER_HATCHERY * state.town_hall_count(p);
            }
        }
        state.update_vision();
        state.check_terminal();
        Ok(state)
    }

    pub fn tree(&self) -> &TechTree {
        &self.tree
    }

    pub fn tree_arc(&self) -> Arc<TechTree> {
        self.tree.clone()
    }

    pub fn map(&self) -> &MapConfig {
        &self.map
    }

    pub fn map_arc(&self) -> Arc<MapConfig> {
        self.map.clone()
    }

    pub fn player(&self, p: PlayerId) -> &PlayerState {
        &self.players[p.index()]
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome.is_some()
    }

    /// Terminal reward from `player`'s perspective.
    pub fn outcome(&self, player: PlayerId) -> Option<i8> {
        self.outcome.map(|o| o.reward(player))
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    // ----- derived quantities -------------------------------------------------------------

    pub fn completed_count(&self, p: PlayerId, id: EntityId) -> u32 {
        self.players[p.index()].buildings.values().filter_map(|b| b.get(&id)).map(|s| s.count).sum()
    }

    pub fn has_completed(&self, p: PlayerId, id: EntityId) -> bool {
        let e = self.tree.entity(id);
        if e.is_tech() {
            self.players[p.index()].research_done.contains(&id)
        } else if e.is_building() {
            self.completed_count(p, id) > 0
        } else {
            self.unit_count(p, id) > 0
        }
    }

    /// All units of a kind, wherever they are.
    pub fn unit_count(&self, p: PlayerId, id: EntityId) -> u32 {
        let st = &self.players[p.index()];
        let mut n = 0;
        if self.tree.entity(id).flags.worker {
            n += st.workers;
        }
        for bags in [&st.units, &st.scouts] {
            n += bags.values().filter_map(|b| b.get(&id)).map(|s| s.count).sum::<u32>();
        }
        n += st.transits.iter().filter_map(|t| t.units.get(&id)).map(|s| s.count).sum::<u32>();
        n
    }

    /// Total workers, including scouts.
    pub fn worker_count(&self, p: PlayerId) -> u32 {
        match self.tree.worker(self.players[p.index()].race) {
            Some(w) => self.unit_count(p, w),
            None => 0,
        }
    }

    fn all_units(&self, p: PlayerId) -> BTreeMap<EntityId, u32> {
        let st = &self.players[p.index()];
        let mut out = BTreeMap::new();
        if let Some(w) = self.tree.worker(st.race) {
            if st.workers > 0 {
                out.insert(w, st.workers);
            }
        }
        let bags = st.units.values().chain(st.scouts.values()).chain(st.transits.iter().map(|t| &t.units));
        for bag in bags {
            for (id, s) in bag {
                *out.entry(*id).or_insert(0) += s.count;
            }
        }
        out.retain(|_, n| *n > 0);
        out
    }

    pub fn supply_used(&self, p: PlayerId) -> u32 {
        self.all_units(p).iter().map(|(id, n)| self.tree.entity(*id).supply * n).sum()
    }

    /// Supply provided by completed buildings and units, before the 200 ceiling.
    pub fn supply_provided(&self, p: PlayerId) -> u32 {
        let st = &self.players[p.index()];
        let from_buildings: u32 =
            st.buildings.values().flat_map(|b| b.iter()).map(|(id, s)| self.tree.entity(*id).provides * s.count).sum();
        let from_units: u32 = self.all_units(p).iter().map(|(id, n)| self.tree.entity(*id).provides * n).sum();
        from_buildings + from_units
    }

    /// Population cap: provided supply clamped to 200, never below current usage.
    pub fn supply_cap(&self, p: PlayerId) -> u32 {
        self.supply_provided(p).min(MAX_SUPPLY).max(self.supply_used(p))
    }

    /// Supply held by units still in production.
    pub fn supply_reserved(&self, p: PlayerId) -> u32 {
        self.players[p.index()]
            .in_process
            .iter()
            .map(|i| self.tree.entity(i.entity))
            .filter(|e| e.is_unit())
            .map(|e| e.supply)
            .sum()
    }

    pub fn army_supply(&self, p: PlayerId) -> u32 {
        self.all_units(p)
            .iter()
            .map(|(id, n)| (self.tree.entity(*id), n))
            .filter(|(e, _)| e.is_army())
            .map(|(e, n)| e.supply * n)
            .sum()
    }

    fn army_present(&self, p: PlayerId) -> bool {
        let st = &self.players[p.index()];
        st.units
            .values()
            .chain(st.transits.iter().filter(|t| !t.scout).map(|t| &t.units))
            .flat_map(|b| b.iter())
            .any(|(id, s)| s.count > 0 && self.tree.entity(*id).is_army())
    }

    pub fn town_hall_count(&self, p: PlayerId) -> u32 {
        match self.tree.town_hall(self.players[p.index()].race) {
            Some(th) => self.completed_count(p, th),
            None => 0,
        }
    }

    fn uses_larva(&self, p: PlayerId) -> bool {
        let race = self.players[p.index()].race;
        self.tree.entities().iter().any(|e| e.race == race && e.flags.larva)
    }

    /// Nodes with a completed town hall, nearest to `p`'s main first.
    pub fn base_nodes(&self, p: PlayerId) -> Vec<Node> {
        let Some(th) = self.tree.town_hall(self.players[p.index()].race) else {
            return Vec::new();
        };
        self.map
            .nodes_by_distance(p)
            .into_iter()
            .filter(|n| self.players[p.index()].buildings.get(n).and_then(|b| b.get(&th)).is_some_and(|s| s.count > 0))
            .collect()
    }

    /// Worker allocation per base: (node, mineral workers, gas workers).
    pub fn worker_allocation(&self, p: PlayerId) -> Vec<(Node, u32, u32)> {
        let st = &self.players[p.index()];
        let gas = self.tree.gas_building(st.race);
        let mut left = st.workers;
        let mut out = Vec::new();
        for node in self.base_nodes(p) {
            let gas_buildings =
                gas.and_then(|g| st.buildings.get(&node).and_then(|b| b.get(&g))).map(|s| s.count).unwrap_or(0);
            let g = left.min(gas_buildings * GAS_WORKERS_PER_BUILDING);
            left -= g;
            let m = left.min(MINERAL_WORKERS_PER_BASE);
            left -= m;
            out.push((node, m, g));
        }
        if let Some(first) = out.first_mut() {
            // Idle surplus waits at the first base.
            first.1 += left;
        }
        out
    }

    fn income_rates(&self, p: PlayerId) -> (u32, u32) {
        let st = &self.players[p.index()];
        let gas = self.tree.gas_building(st.race);
        let mut left = st.workers;
        let (mut minerals, mut gas_workers) = (0, 0);
        for node in self.base_nodes(p) {
            let gb = gas.and_then(|g| st.buildings.get(&node).and_then(|b| b.get(&g))).map(|s| s.count).unwrap_or(0);
            let g = left.min(gb * GAS_WORKERS_PER_BUILDING);
            left -= g;
            let m = left.min(MINERAL_WORKERS_PER_BASE);
            left -= m;
            minerals += m;
            gas_workers += g;
        }
        (minerals, gas_workers)
    }

    /// Keeps one ability cooldown slot per completed town hall.
    fn sync_town_halls(&mut self, p: PlayerId) {
        let n = self.town_hall_count(p) as usize;
        let cds = &mut self.players[p.index()].ability_cooldowns;
        cds.resize(n, 0);
    }

    // ----- tick ---------------------------------------------------------------------------

    /// Advances the simulation by one tick.
    pub fn tick(&mut self) -> Vec<GameEvent> {
        if self.outcome.is_some() {
            return vec![GameEvent::Warning { tick: self.tick, message: "tick called on a terminal state".into() }];
        }
        self.tick += 1;
        let mut events = Vec::new();
        for p in PlayerId::both() {
            self.accrue_income(p);
            self.regenerate(p);
        }
        for p in PlayerId::both() {
            self.advance_production(p, &mut events);
        }
        for p in PlayerId::both() {
            self.update_order(p);
            self.advance_movement(p);
        }
        self.resolve_combat(&mut events);
        self.update_vision();
        if let Some(outcome) = self.check_terminal() {
            events.push(GameEvent::Terminal { tick: self.tick, outcome });
        }
        events
    }

    fn accrue_income(&mut self, p: PlayerId) {
        let (m, g) = self.income_rates(p);
        let st = &mut self.players[p.index()];
        st.carry_minerals += m * st.income_milli;
        st.carry_gas += g * st.income_milli;
        let (dm, dg) = (st.carry_minerals / 1000, st.carry_gas / 1000);
        st.carry_minerals %= 1000;
        st.carry_gas %= 1000;
        st.minerals += dm;
        st.gas += dg;
        st.minerals_mined += dm as u64;
        st.gas_mined += dg as u64;
    }

    fn regenerate(&mut self, p: PlayerId) {
        let larva_cap = if self.uses_larva(p) { LARVA_PER_HATCHERY * self.town_hall_count(p) } else { 0 };
        let st = &mut self.players[p.index()];
        for cd in st.ability_cooldowns.iter_mut() {
            *cd = cd.saturating_sub(1);
        }
        if larva_cap > 0 && st.larva < larva_cap {
            st.larva_timer += 1;
            if st.larva_timer >= LARVA_PERIOD {
                st.larva_timer = 0;
                st.larva = (st.larva + larva_cap / LARVA_PER_HATCHERY).min(larva_cap);
            }
        } else {
            st.larva_timer = 0;
        }
    }

    fn advance_production(&mut self, p: PlayerId, events: &mut Vec<GameEvent>) {
        let tick = self.tick;
        let mut done = Vec::new();
        let st = &mut self.players[p.index()];
        for item in st.in_process.iter_mut() {
            item.remaining_ticks -= 1;
        }
        st.in_process.retain(|item| {
            if item.remaining_ticks == 0 {
                done.push(item.clone());
                false
            } else {
                true
            }
        });
        for item in done {
            self.spawn(p, item.entity, item.node);
            events.push(GameEvent::Completed {
                tick,
                player: p,
                entity: self.tree.entity(item.entity).key.clone(),
                node: item.node,
            });
        }
    }

    fn spawn(&mut self, p: PlayerId, id: EntityId, node: Node) {
        let tree = self.tree.clone();
        let e = tree.entity(id);
        let st = &mut self.players[p.index()];
        st.ever_completed.insert(id);
        if e.is_tech() {
            st.research_done.insert(id);
        } else if e.is_building() {
            bag_add(st.buildings.entry(node).or_default(), id, Stack { count: 1, damage: 0.0 });
            if e.flags.townhall {
                self.sync_town_halls(p);
            }
        } else if e.flags.worker {
            st.workers += 1;
        } else {
            bag_add(st.units.entry(node).or_default(), id, Stack { count: 1, damage: 0.0 });
        }
    }

    fn enemy_army_at(&self, p: PlayerId, node: Node) -> bool {
        self.players[p.other().index()]
            .units
            .get(&node)
            .is_some_and(|b| b.iter().any(|(id, s)| s.count > 0 && self.tree.entity(*id).is_army()))
    }

    fn owned_nodes(&self, p: PlayerId) -> Vec<Node> {
        let st = &self.players[p.index()];
        self.map
            .nodes_by_distance(p)
            .into_iter()
            .filter(|n| st.buildings.get(n).is_some_and(|b| bag_count(b) > 0))
            .collect()
    }

    fn update_order(&mut self, p: PlayerId) {
        let order = self.players[p.index()].army_order;
        let new = match order {
            ArmyOrder::Hold => self
                .owned_nodes(p)
                .into_iter()
                .find(|n| self.enemy_army_at(p, *n))
                .map(ArmyOrder::Defend)
                .unwrap_or(ArmyOrder::Hold),
            ArmyOrder::Defend(n) if !self.enemy_army_at(p, n) => ArmyOrder::Hold,
            ArmyOrder::Retreat => {
                let home = self.rally_point(p);
                let st = &self.players[p.index()];
                let away = st
                    .units
                    .iter()
                    .filter(|(n, _)| **n != home)
                    .flat_map(|(_, b)| b.iter())
                    .any(|(id, s)| s.count > 0 && self.tree.entity(*id).is_army());
                let moving = st.transits.iter().any(|t| !t.scout);
                if away || moving {
                    ArmyOrder::Retreat
                } else {
                    ArmyOrder::Hold
                }
            }
            other => other,
        };
        self.players[p.index()].army_order = new;
    }

    /// Where idle and retreating armies gather: the main, or the nearest remaining base.
    fn rally_point(&self, p: PlayerId) -> Node {
        let home = self.map.home(p);
        let owned = self.owned_nodes(p);
        if owned.contains(&home) || owned.is_empty() {
            home
        } else {
            owned[0]
        }
    }

    fn advance_movement(&mut self, p: PlayerId) {
        let target = match self.players[p.index()].army_order {
            ArmyOrder::Hold | ArmyOrder::Retreat => self.rally_point(p),
            ArmyOrder::Attack(n) | ArmyOrder::Defend(n) => n,
        };
        let scout_target = self.map.home(p.other());
        let tree = self.tree.clone();
        let map = self.map.clone();
        let st = &mut self.players[p.index()];

        let mut arrived = Vec::new();
        st.transits.retain_mut(|t| {
            t.remaining -= 1;
            if t.remaining == 0 {
                arrived.push(t.clone());
                false
            } else {
                true
            }
        });
        for t in arrived {
            let dest = if t.scout { st.scouts.entry(t.to).or_default() } else { st.units.entry(t.to).or_default() };
            for (id, s) in t.units {
                bag_add(dest, id, s);
            }
        }

        let mut departures = Vec::new();
        for (node, bag) in st.units.iter_mut() {
            if *node == target {
                continue;
            }
            let movers: Vec<EntityId> =
                bag.iter().filter(|(id, s)| s.count > 0 && tree.entity(**id).is_army()).map(|(id, _)| *id).collect();
            if movers.is_empty() {
                continue;
            }
            let mut moving = Bag::new();
            for id in movers {
                moving.insert(id, bag.remove(&id).unwrap());
            }
            departures.push((*node, moving, false, target));
        }
        for (node, bag) in st.scouts.iter_mut() {
            if *node == scout_target || bag.is_empty() {
                continue;
            }
            departures.push((*node, std::mem::take(bag), true, scout_target));
        }
        for (from, units, scout, dest) in departures {
            let to = map.next_hop(from, dest);
            let remaining = map.travel(from, to).expect("next hop is adjacent");
            st.transits.push(Transit { units, from, to, remaining, scout });
        }
        st.units.retain(|_, b| {
            b.retain(|_, s| s.count > 0);
            !b.is_empty()
        });
        st.scouts.retain(|_, b| {
            b.retain(|_, s| s.count > 0);
            !b.is_empty()
        });
    }

    // ----- combat -------------------------------------------------------------------------

    fn engagement_side(&self, p: PlayerId, node: Node) -> (EngagementSide, Vec<GroupRef>) {
        let st = &self.players[p.index()];
        let mut groups = Vec::new();
        let mut refs = Vec::new();
        let unit_group = |id: EntityId, s: &Stack, soft: bool| {
            let e = self.tree.entity(id);
            let m = self.tree.modifiers(id, &st.research_done);
            CombatGroup {
                count: s.count,
                damage: s.damage,
                hp: e.hp * (1.0 + m.hp),
                dps_ground: e.dps_ground * (1.0 + m.dps),
                dps_air: e.dps_air * (1.0 + m.dps),
                air: e.flags.air,
                cloaked: e.flags.cloaked,
                detector: e.flags.detector,
                class: if soft || !e.is_army() { TargetClass::Soft } else { TargetClass::Combat },
                value: e.value() as f64,
            }
        };
        if let Some(bag) = st.units.get(&node) {
            for (id, s) in bag.iter().filter(|(_, s)| s.count > 0) {
                groups.push(unit_group(*id, s, false));
                refs.push(GroupRef::Unit(*id));
            }
        }
        if let Some(bag) = st.scouts.get(&node) {
            for (id, s) in bag.iter().filter(|(_, s)| s.count > 0) {
                groups.push(unit_group(*id, s, true));
                refs.push(GroupRef::Scout(*id));
            }
        }
        if let Some(w) = self.tree.worker(st.race) {
            let here: u32 =
                self.worker_allocation(p).iter().filter(|(n, _, _)| *n == node).map(|(_, m, g)| m + g).sum();
            if here > 0 {
                let stack = Stack { count: here, damage: st.worker_damage };
                groups.push(unit_group(w, &stack, true));
                refs.push(GroupRef::Workers);
            }
        }
        let mut aura: f64 = 0.0;
        if let Some(bag) = st.buildings.get(&node) {
            for (id, s) in bag.iter().filter(|(_, s)| s.count > 0) {
                let e = self.tree.entity(*id);
                aura = aura.max(e.aura);
                groups.push(CombatGroup {
                    count: s.count,
                    damage: s.damage,
                    hp: e.hp,
                    dps_ground: e.dps_ground,
                    dps_air: e.dps_air,
                    air: false,
                    cloaked: false,
                    detector: e.flags.detector,
                    class: if e.flags.defense { TargetClass::Combat } else { TargetClass::Structure },
                    value: if e.flags.defense { e.value() as f64 } else { 0.0 },
                });
                refs.push(GroupRef::Building(*id));
            }
        }
        let owned = st.buildings.get(&node).is_some_and(|b| bag_count(b) > 0);
        (EngagementSide { groups, damage_reduction: aura, may_retreat: !owned }, refs)
    }

    fn resolve_combat(&mut self, events: &mut Vec<GameEvent>) {
        let tick = self.tick;
        for node in self.map.nodes().collect::<Vec<_>>() {
            let (a, ra) = self.engagement_side(PlayerId::P1, node);
            let (b, rb) = self.engagement_side(PlayerId::P2, node);
            if a.groups.is_empty() || b.groups.is_empty() {
                continue;
            }
            let state = EngagementState { sides: [a, b] };
            let res = micro_step(&state, &self.micro);
            let refs = [ra, rb];
            let mut losses: [Vec<Loss>; 2] = [Vec::new(), Vec::new()];
            let mut any = false;
            for p in PlayerId::both() {
                let side = &res.sides[p.index()];
                for (i, r) in refs[p.index()].iter().enumerate() {
                    let (count, damage) = side.groups[i];
                    let lost = side.losses[i];
                    if lost > 0 || damage != state.sides[p.index()].groups[i].damage {
                        any = true;
                    }
                    if lost > 0 {
                        losses[p.index()].push(Loss {
                            entity: self.tree.entity(r.entity(&self.tree, self.players[p.index()].race)).key.clone(),
                            count: lost,
                        });
                    }
                    self.write_back(p, node, *r, count, damage, lost);
                }
                if side.retreat {
                    self.players[p.index()].army_order = ArmyOrder::Retreat;
                }
            }
            let retreats = [res.sides[0].retreat, res.sides[1].retreat];
            if any || retreats.iter().any(|r| *r) {
                events.push(GameEvent::Combat { tick, node, losses, retreats });
            }
            for p in PlayerId::both() {
                self.sync_town_halls(p);
                let st = &mut self.players[p.index()];
                for bags in [&mut st.units, &mut st.scouts, &mut st.buildings] {
                    bags.retain(|_, b| {
                        b.retain(|_, s| s.count > 0);
                        !b.is_empty()
                    });
                }
            }
        }
    }

    fn write_back(&mut self, p: PlayerId, node: Node, r: GroupRef, count: u32, damage: f64, lost: u32) {
        let st = &mut self.players[p.index()];
        let slot = match r {
            GroupRef::Unit(id) => st.units.get_mut(&node).and_then(|b| b.get_mut(&id)),
            GroupRef::Scout(id) => st.scouts.get_mut(&node).and_then(|b| b.get_mut(&id)),
            GroupRef::Building(id) => st.buildings.get_mut(&node).and_then(|b| b.get_mut(&id)),
            GroupRef::Workers => {
                st.workers -= lost;
                st.worker_damage = damage;
                return;
            }
        };
        if let Some(s) = slot {
            s.count = count;
            s.damage = damage;
        }
    }

    // ----- vision and terminal ------------------------------------------------------------

    fn visible_nodes(&self, p: PlayerId) -> BTreeSet<Node> {
        let st = &self.players[p.index()];
        let mut out = BTreeSet::new();
        for bags in [&st.units, &st.scouts, &st.buildings] {
            for (n, b) in bags {
                if bag_count(b) > 0 {
                    out.insert(*n);
                }
            }
        }
        for item in &st.in_process {
            if self.tree.entity(item.entity).is_building() {
                out.insert(item.node);
            }
        }
        for (n, m, g) in self.worker_allocation(p) {
            if m + g > 0 {
                out.insert(n);
            }
        }
        out
    }

    /// Enemy entities physically present at a node.
    fn presence(&self, p: PlayerId, node: Node) -> BTreeMap<EntityId, u32> {
        let st = &self.players[p.index()];
        let mut out = BTreeMap::new();
        for bags in [&st.units, &st.scouts, &st.buildings] {
            if let Some(b) = bags.get(&node) {
                for (id, s) in b {
                    if s.count > 0 {
                        *out.entry(*id).or_insert(0) += s.count;
                    }
                }
            }
        }
        if let Some(w) = self.tree.worker(st.race) {
            let here: u32 =
                self.worker_allocation(p).iter().filter(|(n, _, _)| *n == node).map(|(_, m, g)| m + g).sum();
            if here > 0 {
                *out.entry(w).or_insert(0) += here;
            }
        }
        out
    }

    fn update_vision(&mut self) {
        let tick = self.tick;
        for p in PlayerId::both() {
            let visible = self.visible_nodes(p);
            let snapshots: Vec<(Node, BTreeMap<EntityId, u32>)> =
                visible.iter().map(|n| (*n, self.presence(p.other(), *n))).collect();
            let st = &mut self.players[p.index()];
            for (n, entities) in snapshots {
                st.scouted.insert(n, tick);
                st.sightings.insert(n, Sighting { tick, entities });
            }
        }
    }

    fn eliminated(&self, p: PlayerId) -> bool {
        !self.players[p.index()]
            .buildings
            .values()
            .flat_map(|b| b.iter())
            .any(|(id, s)| s.count > 0 && (self.tree.entity(*id).flags.townhall || self.tree.is_unit_producer(*id)))
    }

    fn check_terminal(&mut self) -> Option<Outcome> {
        if self.outcome.is_some() {
            return None;
        }
        let out = match (self.eliminated(PlayerId::P1), self.eliminated(PlayerId::P2)) {
            (true, true) => Some(Outcome::Draw),
            (true, false) => Some(Outcome::Win(PlayerId::P2)),
            (false, true) => Some(Outcome::Win(PlayerId::P1)),
            (false, false) if self.tick >= self.max_ticks => Some(Outcome::Draw),
            _ => None,
        };
        self.outcome = out;
        out
    }

    /// Region of `node` as seen by `p`.
    pub fn region_of(&self, p: PlayerId, node: Node) -> Region {
        self.map.region(p, node)
    }

    /// Nodes where `p` may place a new town hall, nearest first.
    pub(crate) fn free_expansions(&self, p: PlayerId) -> Vec<Node> {
        if self.tree.town_hall(self.players[p.index()].race).is_none() {
            return Vec::new();
        }
        let mut used = [0u32; NODE_COUNT];
        for q in PlayerId::both() {
            let st = &self.players[q.index()];
            let q_th = self.tree.town_hall(st.race);
            for (n, b) in &st.buildings {
                if let Some(t) = q_th {
                    used[n.0 as usize] += b.get(&t).map(|s| s.count).unwrap_or(0);
                }
            }
            for item in &st.in_process {
                if Some(item.entity) == q_th {
                    used[item.node.0 as usize] += 1;
                }
            }
        }
        self.map
            .nodes_by_distance(p)
            .into_iter()
            .filter(|n| used[n.0 as usize] < self.map.slots[n.0 as usize])
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum GroupRef {
    Unit(EntityId),
    Scout(EntityId),
    Workers,
    Building(EntityId),
}

impl GroupRef {
    fn entity(&self, tree: &TechTree, race: Race) -> EntityId {
        match self {
            GroupRef::Unit(id) | GroupRef::Scout(id) | GroupRef::Building(id) => *id,
            GroupRef::Workers => tree.worker(race).expect("race has a worker"),
        }
    }
}

#[cfg(test)]
mod tests;
