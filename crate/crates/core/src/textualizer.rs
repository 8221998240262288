//! Observation-to-text adapter.
//!
//! Line grammar (frozen; prompts, summaries and the scripted backend read it):
//!
//! ```text
//! Game time: MM:SS
//! [Resources]
//! Minerals: 50
//! ...
//! [Units]
//! Probe: 12
//! ...
//! ```
//!
//! Count lines are always `<Name>: <count>`; everything else uses a distinct prefix.

use serde::{Deserialize, Serialize};

use crate::map::Region;
use crate::sim::{Observation, ResearchStatus};
use crate::techtree::Race;

pub const SECTION_TITLES: [&str; 6] = ["Resources", "Units", "Buildings", "In-Process", "Enemy Status", "Research"];
pub const NO_ENEMY_LINE: &str = "No enemy units or buildings sighted";
pub const NONE_LINE: &str = "None";
pub const GAME_TIME_PREFIX: &str = "Game time: ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedObservation {
    pub tick: u32,
    pub game_time: String,
    pub sections: Vec<Section>,
}

impl RenderedObservation {
    pub fn section(&self, title: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.title == title)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{GAME_TIME_PREFIX}{}\n", self.game_time);
        for s in &self.sections {
            out.push_str(&format!("[{}]\n", s.title));
            for l in &s.lines {
                out.push_str(l);
                out.push('\n');
            }
        }
        out
    }
}

/// Zero-padded `MM:SS` at one tick per second; minutes keep growing past 99.
pub fn render_time(tick: u32) -> String {
    format!("{:02}:{:02}", tick / 60, tick % 60)
}

fn seconds_list(remaining: &[u32]) -> String {
    remaining.iter().map(|r| format!("{r}s")).collect::<Vec<_>>().join(", ")
}

pub fn ability_label(race: Race) -> &'static str {
    match race {
        Race::Protoss => "Chrono Boost ready",
        Race::Zerg => "Inject Larva ready",
    }
}

pub fn region_label(region: Region) -> &'static str {
    region.label()
}

pub fn render_observation(obs: &Observation) -> RenderedObservation {
    let r = &obs.resources;
    let mut resources = vec![
        format!("Minerals: {}", r.minerals),
        format!("Gas: {}", r.gas),
        format!("Supply: {}/{}", r.supply_used, r.supply_cap),
        format!("Supply left: {}", r.supply_cap.saturating_sub(r.supply_used)),
        format!("Army supply: {}", r.army_supply),
        format!("Workers: {}", r.workers),
        format!("Bases: {}", r.bases),
        format!("{}: {}", ability_label(obs.race), r.ability_ready),
    ];
    if let Some(l) = r.larva {
        resources.push(format!("Larva: {l}"));
    }

    let mut units: Vec<String> = obs.units.iter().map(|l| format!("{}: {}", l.name, l.count)).collect();
    for a in &obs.army {
        let verb = if a.moving { "Army moving to" } else { "Army at" };
        units.push(format!("{verb} {} ({} supply)", a.region.label(), a.supply));
    }

    let buildings = obs.buildings.iter().map(|l| format!("{}: {}", l.name, l.count)).collect();

    let mut in_process: Vec<String> = obs
        .in_process
        .iter()
        .map(|l| format!("{}: {} ({} remaining)", l.name, l.remaining.len(), seconds_list(&l.remaining)))
        .collect();
    if in_process.is_empty() {
        in_process.push(NONE_LINE.into());
    }

    let mut enemy: Vec<String> = obs
        .enemy
        .iter()
        .map(|e| {
            if e.age == 0 {
                format!("{}: {} ({})", e.name, e.count, e.region.label())
            } else {
                format!("{}: {} ({}, last seen {}s ago)", e.name, e.count, e.region.label(), e.age)
            }
        })
        .collect();
    if enemy.is_empty() {
        enemy.push(NO_ENEMY_LINE.into());
    }

    let mut research: Vec<String> = obs
        .research
        .iter()
        .map(|l| match l.status {
            ResearchStatus::Done => format!("{}: done", l.name),
            ResearchStatus::InProgress(t) => format!("{}: in progress ({t}s remaining)", l.name),
        })
        .collect();
    if research.is_empty() {
        research.push(NONE_LINE.into());
    }

    let bodies = [resources, units, buildings, in_process, enemy, research];
    RenderedObservation {
        tick: obs.tick,
        game_time: render_time(obs.tick),
        sections: SECTION_TITLES
            .iter()
            .zip(bodies)
            .map(|(t, lines)| Section { title: (*t).to_string(), lines })
            .collect(),
    }
}

/// Splits rendered text back into sections; lines outside any section are ignored.
pub fn parse_sections(text: &str) -> Vec<Section> {
    let mut out: Vec<Section> = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if let Some(title) = t.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
            out.push(Section { title: title.to_string(), lines: Vec::new() });
        } else if let Some(s) = out.last_mut() {
            if !t.is_empty() {
                s.lines.push(t.to_string());
            }
        }
    }
    out
}

/// Parses a `<Name>: <count>` line, optionally followed by a parenthesised note.
pub fn parse_count_line(line: &str) -> Option<(&str, u32)> {
    let (name, rest) = line.split_once(": ")?;
    let digits: &str = rest.split([' ', '(']).next()?;
    Some((name, digits.parse().ok()?))
}
