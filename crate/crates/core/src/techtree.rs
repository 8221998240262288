//! Data-driven tech tree: costs, build times, prerequisites, producers and combat stats
//! for every unit, building and research item, read from a line-oriented text file.
//!
//! Record grammar (one per line, `#` starts a comment):
//!
//! ```text
//! start <RACE> minerals=<n> gas=<n> units=<KEY>:<n>,... buildings=<KEY>:<n>,...
//! <unit|building|tech> <KEY> race=<race> display=<Words_With_Underscores> minerals=<n> gas=<n>
//!     ticks=<n> producer=<KEY> [supply=<n>] [provides=<n>] [requires=<KEY>,...] [hp=<f>]
//!     [dps_ground=<f>] [dps_air=<f>] [aura=<f>] [flags=<flag>,...]
//!     [dps_bonus=<f>] [hp_bonus=<f>] [speed_bonus=<f>] [affects=<KEY|ground|air|all>,...]
//! ```
//!
//! [`TechTree`]'s `Display` writes the canonical form of this grammar; parsing that output
//! yields an identical tree.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// The tech tree shipped with the crate.
pub const DEFAULT_TECH_TREE: &str = include_str!("../data/techtree.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Race {
    Protoss,
    Zerg,
}

impl Race {
    pub fn as_str(self) -> &'static str {
        match self {
            Race::Protoss => "protoss",
            Race::Zerg => "zerg",
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            Race::Protoss => "Protoss",
            Race::Zerg => "Zerg",
        }
    }
}

impl FromStr for Race {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "protoss" => Ok(Race::Protoss),
            "zerg" => Ok(Race::Zerg),
            other => Err(DataError::Invalid(format!("unknown race `{other}`"))),
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Unit,
    Building,
    Tech,
}

impl Category {
    fn keyword(self) -> &'static str {
        match self {
            Category::Unit => "unit",
            Category::Building => "building",
            Category::Tech => "tech",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub townhall: bool,
    pub worker: bool,
    pub air: bool,
    pub detector: bool,
    pub cloaked: bool,
    pub gas: bool,
    pub larva: bool,
    pub passive: bool,
    pub defense: bool,
}

const FLAG_NAMES: [&str; 9] =
    ["townhall", "worker", "air", "detector", "cloaked", "gas", "larva", "passive", "defense"];

impl Flags {
    fn set(&mut self, name: &str) -> bool {
        let slot = match name {
            "townhall" => &mut self.townhall,
            "worker" => &mut self.worker,
            "air" => &mut self.air,
            "detector" => &mut self.detector,
            "cloaked" => &mut self.cloaked,
            "gas" => &mut self.gas,
            "larva" => &mut self.larva,
            "passive" => &mut self.passive,
            "defense" => &mut self.defense,
            _ => return false,
        };
        *slot = true;
        true
    }

    fn get(&self, name: &str) -> bool {
        match name {
            "townhall" => self.townhall,
            "worker" => self.worker,
            "air" => self.air,
            "detector" => self.detector,
            "cloaked" => self.cloaked,
            "gas" => self.gas,
            "larva" => self.larva,
            "passive" => self.passive,
            "defense" => self.defense,
            _ => false,
        }
    }
}

/// What a research item's bonus applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffectTarget {
    All,
    Ground,
    Air,
    Entity(EntityId),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TechEffect {
    pub dps_bonus: f64,
    pub hp_bonus: f64,
    pub speed_bonus: f64,
    pub affects: Vec<AffectTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: EntityId,
    pub key: String,
    pub display: String,
    pub category: Category,
    pub race: Race,
    pub minerals: u32,
    pub gas: u32,
    pub supply: u32,
    pub provides: u32,
    pub ticks: u32,
    pub producer: EntityId,
    pub requires: Vec<EntityId>,
    pub hp: f64,
    pub dps_ground: f64,
    pub dps_air: f64,
    pub aura: f64,
    pub flags: Flags,
    pub effect: TechEffect,
}

impl Entity {
    pub fn is_unit(&self) -> bool {
        self.category == Category::Unit
    }

    pub fn is_building(&self) -> bool {
        self.category == Category::Building
    }

    pub fn is_tech(&self) -> bool {
        self.category == Category::Tech
    }

    /// Army units move with attack orders; workers and passive units stay home.
    pub fn is_army(&self) -> bool {
        self.is_unit() && !self.flags.worker && !self.flags.passive
    }

    pub fn value(&self) -> u32 {
        self.minerals + self.gas
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartSpec {
    pub race: Race,
    pub minerals: u32,
    pub gas: u32,
    pub units: Vec<(EntityId, u32)>,
    pub buildings: Vec<(EntityId, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TechTree {
    entities: Vec<Entity>,
    index: BTreeMap<String, EntityId>,
    starts: Vec<StartSpec>,
}

struct RawRecord {
    line: usize,
    category: String,
    key: String,
    fields: BTreeMap<String, String>,
}

fn tokenize(text: &str) -> Result<Vec<RawRecord>, DataError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let category = parts.next().unwrap().to_string();
        let key = parts.next().ok_or_else(|| DataError::syntax(line, "record is missing its key"))?.to_string();
        let mut fields = BTreeMap::new();
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| DataError::syntax(line, format!("expected key=value, got `{part}`")))?;
            if fields.insert(k.to_string(), v.to_string()).is_some() {
                return Err(DataError::syntax(line, format!("field `{k}` given twice")));
            }
        }
        out.push(RawRecord { line, category, key, fields });
    }
    Ok(out)
}

fn list(value: Option<&String>) -> Vec<&str> {
    value.map(|v| v.split(',').filter(|s| !s.is_empty()).collect()).unwrap_or_default()
}

fn num<T: FromStr>(rec: &RawRecord, name: &str, default: Option<T>) -> Result<T, DataError> {
    match rec.fields.get(name) {
        Some(v) => v.parse().map_err(|_| DataError::syntax(rec.line, format!("field `{name}` has bad value `{v}`"))),
        None => default.ok_or_else(|| DataError::syntax(rec.line, format!("missing field `{name}`"))),
    }
}

const ENTITY_FIELDS: [&str; 18] = [
    "race",
    "display",
    "minerals",
    "gas",
    "supply",
    "provides",
    "ticks",
    "producer",
    "requires",
    "hp",
    "dps_ground",
    "dps_air",
    "aura",
    "flags",
    "dps_bonus",
    "hp_bonus",
    "speed_bonus",
    "affects",
];

impl TechTree {
    pub fn default_tree() -> TechTree {
        DEFAULT_TECH_TREE.parse().expect("shipped tech tree must parse")
    }

    pub fn parse(text: &str) -> Result<TechTree, DataError> {
        let records = tokenize(text)?;
        let mut index = BTreeMap::new();
        let mut entity_records = Vec::new();
        let mut start_records = Vec::new();
        for rec in records {
            let category = match rec.category.as_str() {
                "unit" => Category::Unit,
                "building" => Category::Building,
                "tech" => Category::Tech,
                "start" => {
                    start_records.push(rec);
                    continue;
                }
                other => return Err(DataError::syntax(rec.line, format!("unknown record kind `{other}`"))),
            };
            let id = EntityId(entity_records.len() as u16);
            if index.insert(rec.key.clone(), id).is_some() {
                return Err(DataError::Duplicate(rec.key));
            }
            entity_records.push((category, rec));
        }

        let lookup = |line: usize, key: &str| -> Result<EntityId, DataError> {
            index.get(key).copied().ok_or_else(|| DataError::syntax(line, format!("unknown entity `{key}`")))
        };

        let mut entities = Vec::with_capacity(entity_records.len());
        for (i, (category, rec)) in entity_records.iter().enumerate() {
            for k in rec.fields.keys() {
                if !ENTITY_FIELDS.contains(&k.as_str()) {
                    return Err(DataError::syntax(rec.line, format!("unknown field `{k}`")));
                }
            }
            let race: Race = rec
                .fields
                .get("race")
                .ok_or_else(|| DataError::syntax(rec.line, "missing field `race`"))?
                .parse()
                .map_err(|e: DataError| DataError::syntax(rec.line, e.to_string()))?;
            let display = rec
                .fields
                .get("display")
                .ok_or_else(|| DataError::syntax(rec.line, "missing field `display`"))?
                .replace('_', " ");
            let producer_key =
                rec.fields.get("producer").ok_or_else(|| DataError::syntax(rec.line, "missing field `producer`"))?;
            let producer = lookup(rec.line, producer_key)?;
            let requires = list(rec.fields.get("requires"))
                .into_iter()
                .map(|k| lookup(rec.line, k))
                .collect::<Result<Vec<_>, _>>()?;
            let mut flags = Flags::default();
            for f in list(rec.fields.get("flags")) {
                if !flags.set(f) {
                    return Err(DataError::syntax(rec.line, format!("unknown flag `{f}`")));
                }
            }
            let affects = list(rec.fields.get("affects"))
                .into_iter()
                .map(|k| match k {
                    "all" => Ok(AffectTarget::All),
                    "ground" => Ok(AffectTarget::Ground),
                    "air" => Ok(AffectTarget::Air),
                    other => lookup(rec.line, other).map(AffectTarget::Entity),
                })
                .collect::<Result<Vec<_>, _>>()?;
            entities.push(Entity {
                id: EntityId(i as u16),
                key: rec.key.clone(),
                display,
                category: *category,
                race,
                minerals: num(rec, "minerals", None)?,
                gas: num(rec, "gas", None)?,
                supply: num(rec, "supply", Some(0))?,
                provides: num(rec, "provides", Some(0))?,
                ticks: num(rec, "ticks", None)?,
                producer,
                requires,
                hp: num(rec, "hp", Some(0.0))?,
                dps_ground: num(rec, "dps_ground", Some(0.0))?,
                dps_air: num(rec, "dps_air", Some(0.0))?,
                aura: num(rec, "aura", Some(0.0))?,
                flags,
                effect: TechEffect {
                    dps_bonus: num(rec, "dps_bonus", Some(0.0))?,
                    hp_bonus: num(rec, "hp_bonus", Some(0.0))?,
                    speed_bonus: num(rec, "speed_bonus", Some(0.0))?,
                    affects,
                },
            });
        }

        let mut starts = Vec::new();
        for rec in &start_records {
            let race: Race = rec.key.parse().map_err(|e: DataError| DataError::syntax(rec.line, e.to_string()))?;
            let counted = |name: &str| -> Result<Vec<(EntityId, u32)>, DataError> {
                list(rec.fields.get(name))
                    .into_iter()
                    .map(|item| {
                        let (k, n) = item
                            .split_once(':')
                            .ok_or_else(|| DataError::syntax(rec.line, format!("expected KEY:count, got `{item}`")))?;
                        let n = n.parse().map_err(|_| DataError::syntax(rec.line, format!("bad count `{n}`")))?;
                        Ok((lookup(rec.line, k)?, n))
                    })
                    .collect()
            };
            if starts.iter().any(|s: &StartSpec| s.race == race) {
                return Err(DataError::Duplicate(format!("start {}", race.as_str())));
            }
            starts.push(StartSpec {
                race,
                minerals: num(rec, "minerals", None)?,
                gas: num(rec, "gas", None)?,
                units: counted("units")?,
                buildings: counted("buildings")?,
            });
        }

        let tree = TechTree { entities, index, starts };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<(), DataError> {
        for e in &self.entities {
            let producer = self.entity(e.producer);
            let ok = match e.category {
                Category::Building => producer.is_unit() && producer.flags.worker,
                Category::Unit | Category::Tech => producer.is_building(),
            };
            if !ok {
                return Err(DataError::Invalid(format!("{} cannot be produced by {}", e.key, producer.key)));
            }
            if producer.race != e.race {
                return Err(DataError::Invalid(format!("{} has a cross-race producer", e.key)));
            }
            if e.category != Category::Tech && e.ticks == 0 {
                return Err(DataError::Invalid(format!("{} has zero build time", e.key)));
            }
            for r in &e.requires {
                let req = self.entity(*r);
                if req.is_unit() {
                    return Err(DataError::Invalid(format!(
                        "{} requires unit {}; only buildings and techs may be prerequisites",
                        e.key, req.key
                    )));
                }
            }
        }
        // Depth-first cycle check over requires + producer edges.
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        fn visit(tree: &TechTree, id: EntityId, marks: &mut [Mark]) -> Result<(), DataError> {
            match marks[id.0 as usize] {
                Mark::Done => return Ok(()),
                Mark::Active => {
                    return Err(DataError::Invalid(format!("prerequisite cycle through {}", tree.entity(id).key)))
                }
                Mark::New => {}
            }
            marks[id.0 as usize] = Mark::Active;
            let e = tree.entity(id);
            for dep in e.requires.iter() {
                visit(tree, *dep, marks)?;
            }
            // Worker <-> town hall production is a loop by nature; only building producers
            // participate in the acyclicity check.
            if tree.entity(e.producer).is_building() {
                visit(tree, e.producer, marks)?;
            }
            marks[id.0 as usize] = Mark::Done;
            Ok(())
        }
        let mut marks = vec![Mark::New; self.entities.len()];
        for e in &self.entities {
            visit(self, e.id, &mut marks)?;
        }
        for race in [Race::Protoss, Race::Zerg] {
            let start = self
                .start(race)
                .ok_or_else(|| DataError::Invalid(format!("missing start record for {}", race.as_str())))?;
            if self.worker(race).is_none() || self.town_hall(race).is_none() {
                return Err(DataError::Invalid(format!("{} needs a worker and a town hall", race.as_str())));
            }
            for (id, _) in start.units.iter().chain(&start.buildings) {
                if self.entity(*id).race != race {
                    return Err(DataError::Invalid(format!("start for {} lists foreign entity", race.as_str())));
                }
            }
        }
        Ok(())
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.0 as usize]
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn id(&self, key: &str) -> Option<EntityId> {
        self.index.get(key).copied()
    }

    /// Resolves either a canonical key (`CYBERNETICSCORE`) or a display name (`Cybernetics Core`).
    pub fn lookup(&self, name: &str) -> Option<EntityId> {
        if let Some(id) = self.id(name) {
            return Some(id);
        }
        let squashed: String = name.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_uppercase();
        self.id(&squashed)
            .or_else(|| self.entities.iter().find(|e| e.display.eq_ignore_ascii_case(name.trim())).map(|e| e.id))
    }

    pub fn start(&self, race: Race) -> Option<&StartSpec> {
        self.starts.iter().find(|s| s.race == race)
    }

    pub fn of_race(&self, race: Race, category: Category) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(move |e| e.race == race && e.category == category)
    }

    pub fn worker(&self, race: Race) -> Option<EntityId> {
        self.of_race(race, Category::Unit).find(|e| e.flags.worker).map(|e| e.id)
    }

    pub fn town_hall(&self, race: Race) -> Option<EntityId> {
        self.of_race(race, Category::Building).find(|e| e.flags.townhall).map(|e| e.id)
    }

    pub fn gas_building(&self, race: Race) -> Option<EntityId> {
        self.of_race(race, Category::Building).find(|e| e.flags.gas).map(|e| e.id)
    }

    /// Buildings that produce units (the "production capacity" used by the loss rule).
    pub fn is_unit_producer(&self, building: EntityId) -> bool {
        self.entities.iter().any(|e| e.is_unit() && e.producer == building)
    }

    /// Number of building and research kinds available to a race; the denominator of the tech rate.
    pub fn tech_kind_count(&self, race: Race) -> usize {
        self.of_race(race, Category::Building).count() + self.of_race(race, Category::Tech).count()
    }

    /// Multiplicative stat modifiers for `unit` given a set of completed research.
    pub fn modifiers<'a>(&self, unit: EntityId, research: impl IntoIterator<Item = &'a EntityId>) -> Modifiers {
        let u = self.entity(unit);
        let mut m = Modifiers::default();
        for t in research {
            let t = self.entity(*t);
            let applies = t.effect.affects.iter().any(|a| match a {
                AffectTarget::All => u.is_unit(),
                AffectTarget::Ground => u.is_unit() && !u.flags.air,
                AffectTarget::Air => u.is_unit() && u.flags.air,
                AffectTarget::Entity(id) => *id == unit,
            });
            if applies {
                m.dps += t.effect.dps_bonus;
                m.hp += t.effect.hp_bonus;
                m.speed += t.effect.speed_bonus;
            }
        }
        m
    }
}

/// Additive bonus fractions; a unit's stat is `base * (1 + bonus)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Modifiers {
    pub dps: f64,
    pub hp: f64,
    pub speed: f64,
}

impl FromStr for TechTree {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TechTree::parse(s)
    }
}

impl fmt::Display for TechTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let key = |id: &EntityId| self.entity(*id).key.as_str();
        let counted = |items: &[(EntityId, u32)]| {
            items.iter().map(|(id, n)| format!("{}:{n}", key(id))).collect::<Vec<_>>().join(",")
        };
        for s in &self.starts {
            write!(f, "start {} minerals={} gas={}", s.race.as_str().to_ascii_uppercase(), s.minerals, s.gas)?;
            if !s.units.is_empty() {
                write!(f, " units={}", counted(&s.units))?;
            }
            if !s.buildings.is_empty() {
                write!(f, " buildings={}", counted(&s.buildings))?;
            }
            writeln!(f)?;
        }
        for e in &self.entities {
            write!(
                f,
                "{} {} race={} display={} minerals={} gas={}",
                e.category.keyword(),
                e.key,
                e.race.as_str(),
                e.display.replace(' ', "_"),
                e.minerals,
                e.gas
            )?;
            if e.supply != 0 {
                write!(f, " supply={}", e.supply)?;
            }
            write!(f, " ticks={}", e.ticks)?;
            if e.provides != 0 {
                write!(f, " provides={}", e.provides)?;
            }
            write!(f, " producer={}", key(&e.producer))?;
            if !e.requires.is_empty() {
                let r: Vec<_> = e.requires.iter().map(key).collect();
                write!(f, " requires={}", r.join(","))?;
            }
            for (name, v) in [("hp", e.hp), ("dps_ground", e.dps_ground), ("dps_air", e.dps_air), ("aura", e.aura)] {
                if v != 0.0 {
                    write!(f, " {name}={v}")?;
                }
            }
            let flags: Vec<_> = FLAG_NAMES.iter().filter(|n| e.flags.get(n)).copied().collect();
            if !flags.is_empty() {
                write!(f, " flags={}", flags.join(","))?;
            }
            for (name, v) in [
                ("dps_bonus", e.effect.dps_bonus),
                ("hp_bonus", e.effect.hp_bonus),
                ("speed_bonus", e.effect.speed_bonus),
            ] {
                if v != 0.0 {
                    write!(f, " {name}={v}")?;
                }
            }
            if !e.effect.affects.is_empty() {
                let a: Vec<String> = e
                    .effect
                    .affects
                    .iter()
                    .map(|a| match a {
                        AffectTarget::All => "all".to_string(),
                        AffectTarget::Ground => "ground".to_string(),
                        AffectTarget::Air => "air".to_string(),
                        AffectTarget::Entity(id) => key(id).to_string(),
                    })
                    .collect();
                write!(f, " affects={}", a.join(","))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_tree_parses_and_round_trips() {
        let tree = TechTree::default_tree();
        let canonical = tree.to_string();
        let again: TechTree = canonical.parse().unwrap();
        assert_eq!(tree, again);
        assert_eq!(canonical, again.to_string());
    }

    #[test]
    fn shipped_tree_covers_named_entities() {
        let tree = TechTree::default_tree();
        for key in [
            "STARGATE",
            "ROBOTICSFACILITY",
            "PSISTORMTECH",
            "ROACHWARREN",
            "SHIELDBATTERY",
            "PHOTONCANNON",
            "WARPGATERESEARCH",
            "VOIDRAY",
            "PHOENIX",
            "COLOSSUS",
        ] {
            assert!(tree.id(key).is_some(), "{key} missing");
        }
        assert_eq!(tree.of_race(Race::Protoss, Category::Building).count(), 15);
        assert_eq!(tree.of_race(Race::Protoss, Category::Unit).count(), 16);
        assert_eq!(tree.of_race(Race::Zerg, Category::Building).count(), 12);
        assert_eq!(tree.of_race(Race::Zerg, Category::Unit).count(), 10);
        let techs = tree.entities().iter().filter(|e| e.is_tech()).count();
        assert_eq!(techs, 15);
    }

    #[test]
    fn parses_exact_field_values() {
        let tree = TechTree::default_tree();
        let stalker = tree.entity(tree.id("STALKER").unwrap());
        assert_eq!((stalker.minerals, stalker.gas, stalker.supply, stalker.ticks), (125, 50, 2, 30));
        assert_eq!(stalker.display, "Stalker");
        assert_eq!(stalker.dps_air, 9.7);
        assert_eq!(tree.entity(stalker.producer).key, "GATEWAY");
        assert_eq!(tree.entity(stalker.requires[0]).key, "CYBERNETICSCORE");
        let core = tree.entity(tree.id("CYBERNETICSCORE").unwrap());
        assert_eq!(core.display, "Cybernetics Core");
        let start = tree.start(Race::Protoss).unwrap();
        assert_eq!(start.minerals, 50);
        assert_eq!(start.units, vec![(tree.id("PROBE").unwrap(), 12)]);
    }

    #[test]
    fn lookup_accepts_display_names() {
        let tree = TechTree::default_tree();
        let core = tree.id("CYBERNETICSCORE");
        assert_eq!(tree.lookup("Cybernetics Core"), core);
        assert_eq!(tree.lookup("CYBERNETICSCORE"), core);
        assert_eq!(tree.lookup("Psionic Storm"), tree.id("PSISTORMTECH"));
        assert_eq!(tree.lookup("Deathstar"), None);
    }

    fn minimal(extra: &str) -> String {
        format!(
            "start PROTOSS minerals=50 gas=0 units=PROBE:1 buildings=NEXUS:1\n\
             start ZERG minerals=50 gas=0 units=DRONE:1 buildings=HATCHERY:1\n\
             building NEXUS race=protoss display=Nexus minerals=400 gas=0 ticks=71 producer=PROBE flags=townhall\n\
             unit PROBE race=protoss display=Probe minerals=50 gas=0 ticks=12 producer=NEXUS flags=worker\n\
             building HATCHERY race=zerg display=Hatchery minerals=300 gas=0 ticks=71 producer=DRONE flags=townhall\n\
             unit DRONE race=zerg display=Drone minerals=50 gas=0 ticks=12 producer=HATCHERY flags=worker\n{extra}"
        )
    }

    #[test]
    fn rejects_prerequisite_cycles() {
        let text = minimal(
            "building A race=protoss display=A minerals=1 gas=0 ticks=1 producer=PROBE requires=B\n\
             building B race=protoss display=B minerals=1 gas=0 ticks=1 producer=PROBE requires=A\n",
        );
        let err = TechTree::parse(&text).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
        assert!(TechTree::parse(&minimal("")).is_ok());
    }

    #[test]
    fn reports_line_of_syntax_errors() {
        let text = minimal("unit ZEALOT race=protoss display=Zealot minerals=abc gas=0 ticks=1 producer=NEXUS\n");
        match TechTree::parse(&text).unwrap_err() {
            DataError::Syntax { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
        let text = minimal("unit ZEALOT race=protoss display=Zealot minerals=1 gas=0 ticks=1 producer=GATEWAY\n");
        assert!(TechTree::parse(&text).is_err());
    }

    #[test]
    fn modifiers_follow_affects() {
        let tree = TechTree::default_tree();
        let zealot = tree.id("ZEALOT").unwrap();
        let phoenix = tree.id("PHOENIX").unwrap();
        let research = [
            tree.id("PROTOSSGROUNDWEAPONSLEVEL1").unwrap(),
            tree.id("CHARGE").unwrap(),
            tree.id("PROTOSSSHIELDSLEVEL1").unwrap(),
        ];
        let m = tree.modifiers(zealot, &research);
        assert!((m.dps - 0.4).abs() < 1e-12);
        assert!((m.hp - 0.06).abs() < 1e-12);
        let m = tree.modifiers(phoenix, &research);
        assert_eq!(m.dps, 0.0);
        assert!((m.hp - 0.06).abs() < 1e-12);
    }
}
