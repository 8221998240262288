//! Decision extraction: pulls indexed action tokens out of free-form reasoning text and
//! resolves them against the action catalog, exactly or by similarity.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::map::Region;
use crate::sim::{MacroAction, OtherAction};
use crate::techtree::{Category, TechTree};

pub const DEFAULT_CATALOG: &str = include_str!("../data/catalog.txt");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Minimum blended score for a similarity match.
    pub threshold: f64,
    /// Weight of token Jaccard in the blend; the rest goes to edit-distance similarity.
    pub jaccard_weight: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { threshold: 0.6, jaccard_weight: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub token: String,
    pub action: MacroAction,
    normalized: String,
    words: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ActionCatalog {
    entries: Vec<CatalogEntry>,
    index: BTreeMap<String, usize>,
    canonical: BTreeMap<MacroAction, usize>,
    pub config: MatchConfig,
}

/// Uppercases, turns punctuation into spaces and collapses whitespace.
pub fn normalize(text: &str) -> String {
    let mapped: String =
        text.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { ' ' }).collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_action_id(id: &str, tree: &TechTree) -> Result<MacroAction, DataError> {
    let (kind, arg) = match id.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (id, None),
    };
    let entity = |cat: Category| -> Result<_, DataError> {
        let key = arg.ok_or_else(|| DataError::Invalid(format!("action `{id}` needs an argument")))?;
        let e = tree.id(key).ok_or_else(|| DataError::UnknownEntity(key.to_string()))?;
        if tree.entity(e).category != cat {
            return Err(DataError::Invalid(format!("`{key}` is not a {cat:?}")));
        }
        Ok(e)
    };
    Ok(match kind {
        "train" => MacroAction::TrainUnit(entity(Category::Unit)?),
        "build" => MacroAction::BuildStructure(entity(Category::Building)?, None),
        "research" => MacroAction::Research(entity(Category::Tech)?),
        "chrono" => MacroAction::Other(OtherAction::ChronoBoost(entity(Category::Building)?)),
        "attack" => {
            let r: Region = arg.unwrap_or_default().parse()?;
            MacroAction::Other(OtherAction::AttackRegion(r))
        }
        "scout" => MacroAction::Other(OtherAction::Scout),
        "expand" => MacroAction::Other(OtherAction::ExpandToNewResourceLocation),
        "inject" => MacroAction::Other(OtherAction::InjectLarva),
        "retreat" => MacroAction::Other(OtherAction::RetreatHome),
        "noop" => MacroAction::NOOP,
        _ => return Err(DataError::Invalid(format!("unknown action id `{id}`"))),
    })
}

impl ActionCatalog {
    /// The shipped catalog bound to `tree`.
    pub fn default_for(tree: &TechTree) -> ActionCatalog {
        ActionCatalog::parse(DEFAULT_CATALOG, tree).expect("shipped catalog must parse")
    }

    pub fn parse(text: &str, tree: &TechTree) -> Result<ActionCatalog, DataError> {
        let mut cat = ActionCatalog {
            entries: Vec::new(),
            index: BTreeMap::new(),
            canonical: BTreeMap::new(),
            config: MatchConfig::default(),
        };
        for (n, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (token, id) =
                content.split_once('|').ok_or_else(|| DataError::syntax(n + 1, "expected `TOKEN | action`"))?;
            let action = parse_action_id(id.trim(), tree).map_err(|e| DataError::syntax(n + 1, e.to_string()))?;
            cat.push(token.trim(), action).map_err(|e| DataError::syntax(n + 1, e.to_string()))?;
        }
        let buildings: Vec<_> = tree.entities().iter().filter(|e| e.is_building()).map(|e| e.id).collect();
        for b in buildings {
            for r in Region::ALL {
                let action = MacroAction::BuildStructure(b, Some(r));
                cat.push(&action.token(tree), action)?;
            }
        }
        for e in &cat.entries {
            let expected = e.action.token(tree);
            let canonical = &cat.entries[cat.canonical[&e.action]];
            if canonical.token != expected {
                return Err(DataError::Invalid(format!("first token for `{expected}` is `{}`", canonical.token)));
            }
        }
        Ok(cat)
    }

    fn push(&mut self, token: &str, action: MacroAction) -> Result<(), DataError> {
        let normalized = normalize(token);
        if normalized.is_empty() {
            return Err(DataError::Invalid("empty token".into()));
        }
        if self.index.contains_key(&normalized) {
            return Err(DataError::Duplicate(normalized));
        }
        let i = self.entries.len();
        self.index.insert(normalized.clone(), i);
        self.canonical.entry(action).or_insert(i);
        self.entries.push(CatalogEntry {
            token: token.to_string(),
            action,
            words: normalized.split(' ').map(str::to_string).collect(),
            normalized,
        });
        Ok(())
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical token of an action, if the catalog covers it.
    pub fn token_of(&self, action: &MacroAction) -> Option<&str> {
        self.canonical.get(action).map(|i| self.entries[*i].token.as_str())
    }

    /// Canonical tokens, one per action, in catalog order. Placement variants are left out.
    pub fn canonical_tokens(&self) -> Vec<&str> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(i, e)| {
                self.canonical[&e.action] == *i && !matches!(e.action, MacroAction::BuildStructure(_, Some(_)))
            })
            .map(|(_, e)| e.token.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMethod {
    Exact,
    Similarity,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub action: MacroAction,
    pub method: MatchMethod,
    pub score: f64,
    pub source_line: String,
}

/// Edit distance counting insertions, deletions, substitutions and adjacent swaps.
fn edit_distance(a: &[char], b: &[char]) -> usize {
    let w = b.len() + 1;
    let mut d = vec![0usize; (a.len() + 1) * w];
    for (j, cell) in d.iter_mut().enumerate().take(w) {
        *cell = j;
    }
    for i in 1..=a.len() {
        d[i * w] = i;
        for j in 1..=b.len() {
            let sub = d[(i - 1) * w + j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let mut best = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[(i - 2) * w + j - 2] + 1);
            }
            d[i * w + j] = best;
        }
    }
    d[a.len() * w + b.len()]
}

fn edit_similarity(a: &str, b: &str) -> f64 {
    let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let longest = ca.len().max(cb.len());
    if longest == 0 {
        1.0
    } else {
        1.0 - edit_distance(&ca, &cb) as f64 / longest as f64
    }
}

/// Minimum edit similarity for two words to count as the same word.
pub const WORD_MATCH: f64 = 0.7;

/// Word-set Jaccard where words within `WORD_MATCH` edit similarity count as shared.
fn soft_jaccard(a: &str, b: &str) -> f64 {
    let wa: Vec<&str> = a.split(' ').filter(|w| !w.is_empty()).collect();
    let mut wb: Vec<&str> = b.split(' ').filter(|w| !w.is_empty()).collect();
    wb.dedup();
    let total = wa.len() + wb.len();
    if total == 0 {
        return 1.0;
    }
    let mut used = vec![false; wb.len()];
    let mut shared = 0;
    for x in &wa {
        let best = wb
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, edit_similarity(x, y)))
            .filter(|(_, s)| *s >= WORD_MATCH)
            .max_by(|p, q| p.1.total_cmp(&q.1));
        if let Some((j, _)) = best {
            used[j] = true;
            shared += 1;
        }
    }
    shared as f64 / (total - shared) as f64
}

/// Blended similarity of two normalized strings in [0, 1]: fuzzy word overlap plus edit
/// similarity of the strings with spaces removed.
pub fn similarity(a: &str, b: &str, jaccard_weight: f64) -> f64 {
    let compact = |s: &str| s.replace(' ', "");
    let edit = edit_similarity(&compact(a), &compact(b));
    jaccard_weight * soft_jaccard(a, b) + (1.0 - jaccard_weight) * edit
}

/// Resolves one decision token against the catalog.
pub fn match_one(line: &str, catalog: &ActionCatalog) -> MatchResult {
    let norm = normalize(line);
    if let Some(i) = catalog.index.get(&norm) {
        return MatchResult {
            action: catalog.entries[*i].action,
            method: MatchMethod::Exact,
            score: 1.0,
            source_line: line.to_string(),
        };
    }
    let mut best: Option<(usize, f64)> = None;
    if !norm.is_empty() {
        for (i, e) in catalog.entries.iter().enumerate() {
            let s = similarity(&norm, &e.normalized, catalog.config.jaccard_weight);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    match best {
        Some((i, s)) if s >= catalog.config.threshold => MatchResult {
            action: catalog.entries[i].action,
            method: MatchMethod::Similarity,
            score: s,
            source_line: line.to_string(),
        },
        other => MatchResult {
            action: MacroAction::NOOP,
            method: MatchMethod::Failed,
            score: other.map(|(_, s)| s).unwrap_or(0.0),
            source_line: line.to_string(),
        },
    }
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bdecisions\b").unwrap())
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // An index is a bare number (no leading zero unless it is 0 itself) followed by `:`, `.` or `)`.
    RE.get_or_init(|| Regex::new(r"(?:^|[^0-9A-Za-z])(0|[1-9][0-9]{0,2})\s*[:.)]").unwrap())
}

struct Candidate {
    index: u32,
    position: usize,
    token: String,
    bracketed: bool,
}

fn scan(region: &str) -> Vec<Candidate> {
    let markers: Vec<(u32, usize, usize)> = marker_re()
        .captures_iter(region)
        .map(|c| {
            let whole = c.get(0).unwrap();
            let idx = c.get(1).unwrap();
            (idx.as_str().parse().unwrap(), idx.start(), whole.end())
        })
        .collect();
    let mut out = Vec::new();
    for (k, (index, start, body)) in markers.iter().enumerate() {
        let limit = markers.get(k + 1).map(|m| m.1).unwrap_or(region.len());
        let rest = &region[*body..limit.max(*body)];
        let trimmed = rest.trim_start();
        if let Some(inner) = trimmed.strip_prefix('<') {
            if let Some(end) = inner.find('>') {
                let tok = inner[..end].trim();
                if !tok.is_empty() {
                    out.push(Candidate { index: *index, position: *start, token: tok.to_string(), bracketed: true });
                }
                continue;
            }
        }
        let line = trimmed.split('\n').next().unwrap_or("");
        let tok = line
            .trim()
            .trim_end_matches(|c: char| !c.is_ascii_alphanumeric())
            .trim_start_matches(|c: char| !c.is_ascii_alphanumeric());
        if tok.chars().any(|c| c.is_ascii_alphabetic()) {
            out.push(Candidate { index: *index, position: *start, token: tok.to_string(), bracketed: false });
        }
    }
    out
}

fn order(mut cands: Vec<Candidate>) -> Vec<String> {
    cands.sort_by_key(|c| (c.index, c.position));
    let mut seen = std::collections::BTreeSet::new();
    cands.into_iter().filter(|c| seen.insert(c.index)).map(|c| c.token).collect()
}

/// Finds the indexed decision tokens in reasoning text, ordered by index.
///
/// The text after the last `Decisions` header is scanned first and may hold bare tokens.
/// Without such a header, only angle-bracketed tokens count, unless the whole text holds
/// none, in which case bare tokens are accepted when their indices run consecutively.
pub fn parse_decisions(text: &str) -> Vec<String> {
    let headers: Vec<usize> = header_re().find_iter(text).map(|m| m.end()).collect();
    for start in headers.iter().rev() {
        let found = scan(&text[*start..]);
        if !found.is_empty() {
            return order(found);
        }
    }
    let all = scan(text);
    let bracketed: Vec<Candidate> = all
        .iter()
        .filter(|c| c.bracketed)
        .map(|c| Candidate { index: c.index, position: c.position, token: c.token.clone(), bracketed: true })
        .collect();
    if !bracketed.is_empty() {
        return order(bracketed);
    }
    let first = all.first().map(|c| c.index);
    if matches!(first, Some(0) | Some(1)) && all.windows(2).all(|w| w[1].index == w[0].index + 1) {
        return order(all);
    }
    Vec::new()
}

/// Result of extracting a fixed number of actions from one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub actions: Vec<MacroAction>,
    pub matches: Vec<MatchResult>,
    pub diagnostics: Vec<String>,
}

/// Extracts exactly `k` actions, padding with no-ops and truncating extras.
pub fn extract(text: &str, k: usize, catalog: &ActionCatalog) -> Extraction {
    let lines = parse_decisions(text);
    let mut out = Extraction { actions: Vec::with_capacity(k), matches: Vec::new(), diagnostics: Vec::new() };
    for (i, line) in lines.iter().enumerate() {
        if i >= k {
            out.diagnostics.push(format!("decision {i} dropped: only {k} actions per period"));
            continue;
        }
        let m = match_one(line, catalog);
        if m.method == MatchMethod::Failed {
            out.diagnostics.push(format!("decision {i} `{line}` matched nothing (best score {:.2})", m.score));
        }
        out.actions.push(m.action);
        out.matches.push(m);
    }
    for i in out.actions.len()..k {
        out.diagnostics.push(format!("decision {i} missing: padded with no-op"));
        out.actions.push(MacroAction::NOOP);
    }
    out
}

/// Renders actions in the decision grammar, e.g. `0: <BUILD PYLON>`.
pub fn format_decisions(actions: &[MacroAction], catalog: &ActionCatalog, tree: &TechTree) -> String {
    actions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let tok = catalog.token_of(a).map(str::to_string).unwrap_or_else(|| a.token(tree));
            format!("{i}: <{tok}>")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TechTree, ActionCatalog) {
        let tree = TechTree::default_tree();
        let cat = ActionCatalog::default_for(&tree);
        (tree, cat)
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_decisions("Decisions:0: <BUILD PHOTONCANNON> 1: <BUILD SHIELDBATTERY>"),
            ["BUILD PHOTONCANNON", "BUILD SHIELDBATTERY"]
        );
        assert_eq!(
            parse_decisions(
                "0: <TRAIN PHOENIX> 1: <TRAIN VOIDRAY> 2: <BUILD STARGATE> 3: <TRAIN STALKER> 4: <TRAIN COLOSSUS>"
            ),
            ["TRAIN PHOENIX", "TRAIN VOIDRAY", "BUILD STARGATE", "TRAIN STALKER", "TRAIN COLOSSUS"]
        );
        assert!(parse_decisions("We should probably expand soon and keep building probes.").is_empty());
        assert!(parse_decisions("").is_empty());
    }

    #[test]
    fn parse_orders_by_index_and_keeps_first_duplicate() {
        let text = "Decisions:\n2: <TRAIN PROBE>\n0: <BUILD PYLON>\n1: <BUILD GATEWAY>\n0: <BUILD NEXUS>";
        assert_eq!(parse_decisions(text), ["BUILD PYLON", "BUILD GATEWAY", "TRAIN PROBE"]);
    }

    #[test]
    fn parse_tolerates_bullets_and_bare_tokens() {
        let text = "Analysis says 4 gateways.\nDecisions:\n- 1. build pylon\n- 2) <TRAIN PROBE>\n* 3 : scouting probe";
        assert_eq!(parse_decisions(text), ["build pylon", "TRAIN PROBE", "scouting probe"]);
        // Clock times in prose are not decision markers.
        assert!(parse_decisions("At 00:46 game time we had 12 probes.").is_empty());
    }

    #[test]
    fn match_examples() {
        let (tree, cat) = setup();
        let m = match_one("CHRONOBOOST NEXUS", &cat);
        assert_eq!(m.method, MatchMethod::Exact);
        assert_eq!(m.score, 1.0);
        assert_eq!(m.action, MacroAction::Other(OtherAction::ChronoBoost(tree.id("NEXUS").unwrap())));
        let m = match_one("EXPAND TO NEW RESOURCE LOCATION", &cat);
        assert_eq!(m.action, MacroAction::Other(OtherAction::ExpandToNewResourceLocation));
        assert_eq!(m.method, MatchMethod::Exact);
        let m = match_one("BUILD DEATHSTAR", &cat);
        assert_eq!(m.method, MatchMethod::Failed);
        assert_eq!(m.action, MacroAction::NOOP);
        let m = match_one("TRAIN STALKERS", &cat);
        assert_eq!(m.method, MatchMethod::Similarity);
        assert_eq!(m.action, MacroAction::TrainUnit(tree.id("STALKER").unwrap()));
        let m = match_one("scouting probe", &cat);
        assert_eq!(m.action, MacroAction::Other(OtherAction::Scout));
    }

    #[test]
    fn similarity_blend_hand_computed() {
        // PROBE and PROBES are within word tolerance, so both words are shared.
        // Compact strings TRAINPROBE and TRAINPROBES differ by one edit over 11 chars.
        let s = similarity("TRAIN PROBE", "TRAIN PROBES", 0.5);
        assert!((s - (0.5 + 0.5 * (10.0 / 11.0))).abs() < 1e-12);
        // ZEALOT vs STALKER is not a shared word: 1 shared of 3 distinct.
        let s = similarity("TRAIN ZEALOT", "TRAIN STALKER", 0.5);
        let edit = 1.0
            - edit_distance(&"TRAINZEALOT".chars().collect::<Vec<_>>(), &"TRAINSTALKER".chars().collect::<Vec<_>>())
                as f64
                / 12.0;
        assert!((s - (0.5 / 3.0 + 0.5 * edit)).abs() < 1e-12);
        assert_eq!(similarity("A B", "A B", 0.5), 1.0);
        assert_eq!(edit_distance(&['k', 'i', 't'], &['s', 'i', 't', 's']), 2);
        assert_eq!(edit_distance(&['a', 'b', 'c'], &['a', 'c', 'b']), 1);
        assert_eq!(edit_distance(&[], &['x', 'y']), 2);
    }

    #[test]
    fn extract_pads_and_truncates() {
        let (_, cat) = setup();
        let two = extract("Decisions: 0: <BUILD PYLON> 1: <TRAIN PROBE>", 5, &cat);
        assert_eq!(two.actions.len(), 5);
        assert!(two.actions[2..].iter().all(MacroAction::is_noop));
        assert_eq!(two.diagnostics.len(), 3);
        let seven = (0..7).map(|i| format!("{i}: <TRAIN PROBE>")).collect::<Vec<_>>().join(" ");
        let ex = extract(&format!("Decisions: {seven}"), 5, &cat);
        assert_eq!(ex.actions.len(), 5);
        assert_eq!(ex.matches.len(), 5);
        assert_eq!(extract("", 3, &cat).actions, vec![MacroAction::NOOP; 3]);
    }

    #[test]
    fn catalog_is_closed_over_candidate_actions() {
        use crate::map::PlayerId;
        use crate::sim::{new_match, MatchConfig};
        let (tree, cat) = setup();
        let s = new_match(&MatchConfig::default(), 1).unwrap();
        for p in PlayerId::both() {
            for a in s.candidate_actions(p) {
                let tok = cat.token_of(&a).unwrap_or_else(|| panic!("{:?} missing", a));
                assert_eq!(tok, a.token(&tree));
                let m = match_one(tok, &cat);
                assert_eq!((m.action, m.method), (a, MatchMethod::Exact));
            }
        }
        let canon = cat.canonical_tokens();
        let unique: std::collections::BTreeSet<_> = canon.iter().collect();
        assert_eq!(unique.len(), canon.len());
    }

    #[test]
    fn catalog_rejects_bad_lines() {
        let tree = TechTree::default_tree();
        let err = ActionCatalog::parse("TRAIN PROBE | train:PROBE\nBUILD X | build:NOPE\n", &tree).unwrap_err();
        assert!(matches!(err, DataError::Syntax { line: 2, .. }));
        let err = ActionCatalog::parse("TRAIN PROBE | train:PROBE\ntrain  probe | train:PROBE\n", &tree).unwrap_err();
        assert!(matches!(err, DataError::Syntax { line: 2, .. }));
        let err = ActionCatalog::parse("MAKE PROBE | train:PROBE\n", &tree).unwrap_err();
        assert!(matches!(err, DataError::Invalid(_)));
    }

    #[test]
    fn formatting_round_trips() {
        let (tree, cat) = setup();
        let acts = vec![
            MacroAction::TrainUnit(tree.id("PROBE").unwrap()),
            MacroAction::Other(OtherAction::AttackRegion(Region::EnemyNatural)),
            MacroAction::BuildStructure(tree.id("PYLON").unwrap(), Some(Region::Third)),
            MacroAction::NOOP,
        ];
        let text = format!("Decisions:\n{}", format_decisions(&acts, &cat, &tree));
        assert_eq!(extract(&text, 4, &cat).actions, acts);
    }
}
