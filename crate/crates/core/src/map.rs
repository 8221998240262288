//! Abstract region-graph maps.
//!
//! A map is a small graph of seven named regions. Node indices follow the first player's
//! perspective (`MAIN` = 0 .. `ENEMYMAIN` = 6); the second player sees the same graph
//! mirrored, so every [`Region`] is interpreted relative to the acting player.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DataError};

pub const NODE_COUNT: usize = 7;

const BUILTIN_MAPS: [(&str, &str); 2] =
    [("altitude", include_str!("../data/map_altitude.txt")), ("cistern", include_str!("../data/map_cistern.txt"))];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlayerId {
    P1,
    P2,
}

impl PlayerId {
    pub fn index(self) -> usize {
        match self {
            PlayerId::P1 => 0,
            PlayerId::P2 => 1,
        }
    }

    pub fn other(self) -> PlayerId {
        match self {
            PlayerId::P1 => PlayerId::P2,
            PlayerId::P2 => PlayerId::P1,
        }
    }

    pub fn both() -> [PlayerId; 2] {
        [PlayerId::P1, PlayerId::P2]
    }
}

/// Absolute node index into the map graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node(pub u8);

/// A region named from one player's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Main,
    Natural,
    Third,
    Center,
    EnemyThird,
    EnemyNatural,
    EnemyMain,
}

impl Region {
    pub const ALL: [Region; NODE_COUNT] = [
        Region::Main,
        Region::Natural,
        Region::Third,
        Region::Center,
        Region::EnemyThird,
        Region::EnemyNatural,
        Region::EnemyMain,
    ];

    fn ordinal(self) -> u8 {
        self as u8
    }

    /// Data-file key, e.g. `ENEMYNATURAL`.
    pub fn key(self) -> &'static str {
        match self {
            Region::Main => "MAIN",
            Region::Natural => "NATURAL",
            Region::Third => "THIRD",
            Region::Center => "CENTER",
            Region::EnemyThird => "ENEMYTHIRD",
            Region::EnemyNatural => "ENEMYNATURAL",
            Region::EnemyMain => "ENEMYMAIN",
        }
    }

    /// Token words used in action strings, e.g. `ENEMY NATURAL`.
    pub fn token(self) -> &'static str {
        match self {
            Region::Main => "MAIN",
            Region::Natural => "NATURAL",
            Region::Third => "THIRD",
            Region::Center => "CENTER",
            Region::EnemyThird => "ENEMY THIRD",
            Region::EnemyNatural => "ENEMY NATURAL",
            Region::EnemyMain => "ENEMY MAIN",
        }
    }

    /// Lower-case label for observation text.
    pub fn label(self) -> &'static str {
        match self {
            Region::Main => "our main",
            Region::Natural => "our natural",
            Region::Third => "our third",
            Region::Center => "center",
            Region::EnemyThird => "enemy third",
            Region::EnemyNatural => "enemy natural",
            Region::EnemyMain => "enemy main",
        }
    }

    pub fn from_label(label: &str) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.label() == label)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Region {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squashed: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        Region::ALL
            .into_iter()
            .find(|r| r.key() == squashed)
            .ok_or_else(|| DataError::Invalid(format!("unknown region `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub name: String,
    /// Expansion slots per node.
    pub slots: [u32; NODE_COUNT],
    travel: [[Option<u32>; NODE_COUNT]; NODE_COUNT],
    dist: [[u32; NODE_COUNT]; NODE_COUNT],
    next: [[u8; NODE_COUNT]; NODE_COUNT],
}

impl MapConfig {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_MAPS.iter().map(|(n, _)| *n)
    }

    /// Loads a built-in map by name, or a map file when `name` ends in `.txt`.
    pub fn load(name: &str) -> Result<MapConfig, ConfigError> {
        if let Some((_, text)) = BUILTIN_MAPS.iter().find(|(n, _)| *n == name) {
            return Ok(MapConfig::parse(text)?);
        }
        if name.ends_with(".txt") {
            let text =
                std::fs::read_to_string(name).map_err(|source| ConfigError::Io { path: name.to_string(), source })?;
            return Ok(MapConfig::parse(&text)?);
        }
        Err(ConfigError::UnknownMap(name.to_string()))
    }

    pub fn parse(text: &str) -> Result<MapConfig, DataError> {
        let mut name = None;
        let mut slots = [None; NODE_COUNT];
        let mut travel = [[None; NODE_COUNT]; NODE_COUNT];
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let field = |w: &str, key: &str| -> Result<u32, DataError> {
                w.strip_prefix(key)
                    .and_then(|v| v.strip_prefix('='))
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| DataError::syntax(line, format!("expected {key}=<n>, got `{w}`")))
            };
            let region = |w: &str| -> Result<Region, DataError> {
                w.parse().map_err(|e: DataError| DataError::syntax(line, e.to_string()))
            };
            match words.as_slice() {
                ["map", n] => {
                    if name.replace(n.to_string()).is_some() {
                        return Err(DataError::syntax(line, "map name given twice"));
                    }
                }
                ["region", r, s] => {
                    let r = region(r)?;
                    if slots[r.ordinal() as usize].replace(field(s, "slots")?).is_some() {
                        return Err(DataError::Duplicate(r.key().to_string()));
                    }
                }
                ["edge", a, b, t] => {
                    let (a, b) = (region(a)?.ordinal() as usize, region(b)?.ordinal() as usize);
                    if a == b {
                        return Err(DataError::syntax(line, "self loop"));
                    }
                    let t = field(t, "ticks")?;
                    if t == 0 {
                        return Err(DataError::syntax(line, "edge travel time must be positive"));
                    }
                    travel[a][b] = Some(t);
                    travel[b][a] = Some(t);
                }
                _ => return Err(DataError::syntax(line, format!("unrecognised record `{content}`"))),
            }
        }
        let name = name.ok_or_else(|| DataError::Invalid("map has no name record".into()))?;
        let mut slot_counts = [0; NODE_COUNT];
        for (i, s) in slots.iter().enumerate() {
            slot_counts[i] = s.ok_or_else(|| DataError::Invalid(format!("region {} missing", Region::ALL[i].key())))?;
        }
        let mut map = MapConfig {
            name,
            slots: slot_counts,
            travel,
            dist: [[u32::MAX; NODE_COUNT]; NODE_COUNT],
            next: [[0; NODE_COUNT]; NODE_COUNT],
        };
        map.compute_paths();
        map.validate()?;
        Ok(map)
    }

    fn compute_paths(&mut self) {
        for i in 0..NODE_COUNT {
            self.dist[i][i] = 0;
            self.next[i][i] = i as u8;
            for j in 0..NODE_COUNT {
                if let Some(t) = self.travel[i][j] {
                    self.dist[i][j] = t;
                    self.next[i][j] = j as u8;
                }
            }
        }
        for k in 0..NODE_COUNT {
            for i in 0..NODE_COUNT {
                for j in 0..NODE_COUNT {
                    let via = self.dist[i][k].saturating_add(self.dist[k][j]);
                    if via < self.dist[i][j] {
                        self.dist[i][j] = via;
                        self.next[i][j] = self.next[i][k];
                    }
                }
            }
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.dist[0].contains(&u32::MAX) {
            return Err(DataError::Invalid(format!("map {} is not connected", self.name)));
        }
        let own: u32 = self.slots[..3].iter().sum();
        let enemy: u32 = self.slots[4..].iter().sum();
        if own < 3 || enemy < 3 {
            return Err(DataError::Invalid(format!("map {} needs at least 3 expansion slots per side", self.name)));
        }
        Ok(())
    }

    pub fn node(&self, player: PlayerId, region: Region) -> Node {
        match player {
            PlayerId::P1 => Node(region.ordinal()),
            PlayerId::P2 => Node((NODE_COUNT as u8 - 1) - region.ordinal()),
        }
    }

    pub fn region(&self, player: PlayerId, node: Node) -> Region {
        let idx = match player {
            PlayerId::P1 => node.0,
            PlayerId::P2 => (NODE_COUNT as u8 - 1) - node.0,
        };
        Region::ALL[idx as usize]
    }

    pub fn home(&self, player: PlayerId) -> Node {
        self.node(player, Region::Main)
    }

    pub fn travel(&self, a: Node, b: Node) -> Option<u32> {
        self.travel[a.0 as usize][b.0 as usize]
    }

    pub fn distance(&self, a: Node, b: Node) -> u32 {
        self.dist[a.0 as usize][b.0 as usize]
    }

    /// First hop on a shortest path from `from` towards `to`.
    pub fn next_hop(&self, from: Node, to: Node) -> Node {
        Node(self.next[from.0 as usize][to.0 as usize])
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> {
        (0..NODE_COUNT as u8).map(Node)
    }

    /// Nodes ordered from `player`'s main outward (ties broken by perspective order).
    pub fn nodes_by_distance(&self, player: PlayerId) -> Vec<Node> {
        let home = self.home(player);
        let mut nodes: Vec<Node> = Region::ALL.iter().map(|r| self.node(player, *r)).collect();
        nodes.sort_by_key(|n| (self.distance(home, *n), self.region(player, *n)));
        nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_maps_load() {
        for name in MapConfig::builtin_names() {
            let map = MapConfig::load(name).unwrap();
            assert_eq!(map.name, name);
        }
        assert!(matches!(MapConfig::load("foo"), Err(ConfigError::UnknownMap(_))));
    }

    #[test]
    fn perspectives_mirror() {
        let map = MapConfig::load("altitude").unwrap();
        assert_eq!(map.node(PlayerId::P1, Region::EnemyMain), map.home(PlayerId::P2));
        assert_eq!(map.node(PlayerId::P2, Region::EnemyNatural), Node(1));
        for r in Region::ALL {
            for p in PlayerId::both() {
                assert_eq!(map.region(p, map.node(p, r)), r);
            }
        }
    }

    #[test]
    fn shortest_paths() {
        let map = MapConfig::load("altitude").unwrap();
        let main = map.home(PlayerId::P1);
        let enemy = map.home(PlayerId::P2);
        // MAIN-NATURAL-CENTER-ENEMYNATURAL-ENEMYMAIN = 15+25+25+15 = 80
        // MAIN-NATURAL-THIRD-CENTER-ENEMYTHIRD-ENEMYNATURAL-ENEMYMAIN = 15+20+20+20+20+15 = 110
        assert_eq!(map.distance(main, enemy), 80);
        let mut at = main;
        let mut walked = 0;
        while at != enemy {
            let nxt = map.next_hop(at, enemy);
            walked += map.travel(at, nxt).unwrap();
            at = nxt;
        }
        assert_eq!(walked, 80);
    }

    #[test]
    fn rejects_disconnected_and_slotless_maps() {
        let text = "map x\nregion MAIN slots=1\nregion NATURAL slots=1\nregion THIRD slots=1\n\
                    region CENTER slots=0\nregion ENEMYTHIRD slots=1\nregion ENEMYNATURAL slots=1\n\
                    region ENEMYMAIN slots=1\nedge MAIN NATURAL ticks=5\n";
        assert!(MapConfig::parse(text).unwrap_err().to_string().contains("not connected"));
        let src = include_str!("../data/map_altitude.txt").replace("region THIRD slots=1", "region THIRD slots=0");
        assert!(MapConfig::parse(&src).unwrap_err().to_string().contains("expansion slots"));
    }

    #[test]
    fn region_tokens_parse() {
        assert_eq!("ENEMY NATURAL".parse::<Region>().unwrap(), Region::EnemyNatural);
        assert_eq!("enemymain".parse::<Region>().unwrap(), Region::EnemyMain);
        assert_eq!(Region::from_label("enemy third"), Some(Region::EnemyThird));
    }
}
