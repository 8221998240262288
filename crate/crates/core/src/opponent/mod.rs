//! Built-in scripted opponent and the combat micro both sides share.

pub mod micro;
mod script;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DataError};

pub use script::{builtin_policy, WAVE_INTERVAL};

pub const DEFAULT_DIFFICULTY_TABLE: &str = include_str!("../../data/difficulty.txt");

/// Parameters of one rung of the built-in opponent ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyParams {
    pub level: u8,
    pub name: String,
    pub income_multiplier: f64,
    pub decision_period: u32,
    pub aggression_tick: u32,
    pub cheat_vision: bool,
    pub cheat_money: bool,
}

impl DifficultyParams {
    /// Effective mining multiplier in thousandths, doubled under the money cheat.
    pub fn income_milli(&self) -> u32 {
        let base = (self.income_multiplier * 1000.0).round() as u32;
        if self.cheat_money {
            base * 2
        } else {
            base
        }
    }
}

/// Spread of the per-match variation around a level's attack timing and income.
pub const TIMING_SPREAD: f64 = 0.2;
pub const INCOME_SPREAD: f64 = 0.1;

/// One match's draw of a level's settings: attack timing and income vary around the table row.
pub fn match_variant(params: &DifficultyParams, rng: &mut impl rand::Rng) -> DifficultyParams {
    let mut p = params.clone();
    let timing = rng.random_range(1.0 - TIMING_SPREAD..1.0 + TIMING_SPREAD);
    let income = rng.random_range(1.0 - INCOME_SPREAD..1.0 + INCOME_SPREAD);
    p.aggression_tick = (p.aggression_tick as f64 * timing).round() as u32;
    p.income_multiplier *= income;
    p
}

/// Parses a difficulty table.
pub fn parse_difficulty_table(text: &str) -> Result<Vec<DifficultyParams>, DataError> {
    let mut rows: Vec<DifficultyParams> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        if words.next() != Some("level") {
            return Err(DataError::syntax(line, "expected a `level` record"));
        }
        let level: u8 =
            words.next().and_then(|w| w.parse().ok()).ok_or_else(|| DataError::syntax(line, "missing level number"))?;
        let mut row = DifficultyParams {
            level,
            name: String::new(),
            income_multiplier: 1.0,
            decision_period: 0,
            aggression_tick: 0,
            cheat_vision: false,
            cheat_money: false,
        };
        for w in words {
            let (k, v) =
                w.split_once('=').ok_or_else(|| DataError::syntax(line, format!("expected key=value, got `{w}`")))?;
            let bad = || DataError::syntax(line, format!("field `{k}` has bad value `{v}`"));
            match k {
                "name" => row.name = v.replace('_', " "),
                "income" => row.income_multiplier = v.parse().map_err(|_| bad())?,
                "period" => row.decision_period = v.parse().map_err(|_| bad())?,
                "aggression" => row.aggression_tick = v.parse().map_err(|_| bad())?,
                "cheats" => {
                    for c in v.split(',').filter(|c| !c.is_empty()) {
                        match c {
                            "vision" => row.cheat_vision = true,
                            "money" => row.cheat_money = true,
                            _ => return Err(bad()),
                        }
                    }
                }
                _ => return Err(DataError::syntax(line, format!("unknown field `{k}`"))),
            }
        }
        if row.name.is_empty() || row.decision_period == 0 {
            return Err(DataError::syntax(line, "name and a positive period are required"));
        }
        if row.level as usize != rows.len() + 1 {
            return Err(DataError::syntax(line, "levels must be listed in order from 1"));
        }
        rows.push(row);
    }
    for pair in rows.windows(2) {
        if pair[1].income_multiplier < pair[0].income_multiplier || pair[1].decision_period > pair[0].decision_period {
            return Err(DataError::Invalid(format!("level {} is easier than level {}", pair[1].level, pair[0].level)));
        }
    }
    Ok(rows)
}

fn default_table() -> &'static [DifficultyParams] {
    static TABLE: OnceLock<Vec<DifficultyParams>> = OnceLock::new();
    TABLE.get_or_init(|| parse_difficulty_table(DEFAULT_DIFFICULTY_TABLE).expect("shipped difficulty table must parse"))
}

/// The frozen parameter row for a level in 1..=10.
pub fn difficulty_params(level: u8) -> Result<DifficultyParams, ConfigError> {
    let table = default_table();
    if level == 0 || level as usize > table.len() {
        return Err(ConfigError::DifficultyOutOfRange(level));
    }
    Ok(table[level as usize - 1].clone())
}
