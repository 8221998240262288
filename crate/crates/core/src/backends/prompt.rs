//! System prompt templates and request construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatMessage, ChatRequest, Role};
use crate::extractor::ActionCatalog;
use crate::sim::MacroAction;
use crate::techtree::{Race, TechTree};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
const DEFAULT_TIMEOUT_SECS: u64 = 60;
const DEFAULT_RETRIES: u32 = 3;

const PROMPT1: &str = include_str!("../../data/prompts/prompt1.txt");
const PROMPT2: &str = include_str!("../../data/prompts/prompt2.txt");
const SUMMARY: &str = include_str!("../../data/prompts/summary.txt");

/// Marker lines used to recognise a filled template.
const PROMPT2_MARKER: &str = "8. Suggestions:";
const PROMPT1_MARKER: &str = "5. Key Information:";
const SUMMARY_MARKER: &str = "You condense one observation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptTemplate {
    Prompt1,
    Prompt2,
}

impl PromptTemplate {
    pub fn body(self) -> &'static str {
        match self {
            PromptTemplate::Prompt1 => PROMPT1,
            PromptTemplate::Prompt2 => PROMPT2,
        }
    }

    /// Recognises which template produced a system message.
    pub fn detect(system: &str) -> Option<PromptTemplate> {
        if system.contains(PROMPT2_MARKER) {
            Some(PromptTemplate::Prompt2)
        } else if system.contains(PROMPT1_MARKER) {
            Some(PromptTemplate::Prompt1)
        } else {
            None
        }
    }

    pub fn is_summary_request(system: &str) -> bool {
        system.starts_with(SUMMARY_MARKER)
    }
}

impl std::str::FromStr for PromptTemplate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "prompt1" | "1" => Ok(PromptTemplate::Prompt1),
            "prompt2" | "2" => Ok(PromptTemplate::Prompt2),
            _ => Err(format!("unknown prompt template `{s}` (expected prompt1 or prompt2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("period summary is empty")]
    EmptySummary,
    #[error("chain length must be at least 1")]
    ZeroChain,
}

pub fn race_notes(race: Race) -> &'static str {
    match race {
        Race::Protoss => "For Protoss, keep an eye on Nexus's energy to Chrono Boost important structures.",
        Race::Zerg => {
            "For Zerg, pay attention to whether there are enough larvae. If not, consider adding the INJECTLARVA command to the queue."
        }
    }
}

fn category_title(a: &MacroAction) -> &'static str {
    match a {
        MacroAction::TrainUnit(_) => "Unit production",
        MacroAction::BuildStructure(..) => "Building construction",
        MacroAction::Research(_) => "Technology research",
        MacroAction::Other(_) => "Other actions",
    }
}

/// Canonical tokens usable by `race`, grouped by action category, one `<TOKEN>` per line.
pub fn catalog_listing(catalog: &ActionCatalog, tree: &TechTree, race: Race) -> String {
    let mut groups: Vec<(&'static str, Vec<&str>)> = Vec::new();
    for tok in catalog.canonical_tokens() {
        let entry = catalog.entries().iter().find(|e| e.token == tok).expect("canonical token is a catalog entry");
        if entry.action.race(tree).is_some_and(|r| r != race) {
            continue;
        }
        let title = category_title(&entry.action);
        match groups.iter_mut().find(|(t, _)| *t == title) {
            Some((_, v)) => v.push(tok),
            None => groups.push((title, vec![tok])),
        }
    }
    let mut out = String::new();
    for (title, toks) in groups {
        out.push_str(title);
        out.push_str(":\n");
        for t in toks {
            out.push_str(&format!("<{t}>\n"));
        }
    }
    out.push_str(
        "Buildings may be placed with <BUILD <BUILDING> AT <REGION>>, REGION one of MAIN, NATURAL, THIRD, CENTER.\n",
    );
    out
}

/// Fills a template and pairs it with the period summary as the user message.
pub fn build_prompt(
    template: PromptTemplate,
    race: Race,
    k: usize,
    catalog: &ActionCatalog,
    tree: &TechTree,
    period_summary: &str,
) -> Result<ChatRequest, PromptError> {
    if period_summary.trim().is_empty() {
        return Err(PromptError::EmptySummary);
    }
    if k == 0 {
        return Err(PromptError::ZeroChain);
    }
    let system = template
        .body()
        .replace("{race}", race.display())
        .replace("{race_notes}", race_notes(race))
        .replace("{k}", &k.to_string())
        .replace("{last}", &(k - 1).to_string())
        .replace("{catalog}", &catalog_listing(catalog, tree, race));
    Ok(request(system, period_summary.to_string()))
}

/// The single-frame condensation request used by model-based summaries.
pub fn summary_request(race: Race, rendered: &str) -> ChatRequest {
    request(SUMMARY.replace("{race}", race.display()), rendered.to_string())
}

fn request(system: String, user: String) -> ChatRequest {
    ChatRequest {
        model: String::new(),
        messages: vec![
            ChatMessage { role: Role::System, content: system },
            ChatMessage { role: Role::User, content: user },
        ],
        temperature: DEFAULT_TEMPERATURE,
        max_tokens: DEFAULT_MAX_TOKENS,
        timeout_secs: DEFAULT_TIMEOUT_SECS,
        retries: DEFAULT_RETRIES,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (TechTree, ActionCatalog) {
        let tree = TechTree::default_tree();
        let cat = ActionCatalog::default_for(&tree);
        (tree, cat)
    }

    #[test]
    fn race_notes_are_included() {
        let (tree, cat) = fixture();
        let p = build_prompt(PromptTemplate::Prompt2, Race::Protoss, 5, &cat, &tree, "x").unwrap();
        assert!(p.system().contains("keep an eye on Nexus's energy"));
        let z = build_prompt(PromptTemplate::Prompt2, Race::Zerg, 5, &cat, &tree, "x").unwrap();
        assert!(z.system().contains("consider adding the INJECTLARVA command"));
        assert!(!p.system().contains("INJECTLARVA"));
    }

    #[test]
    fn k_and_catalog_appear_verbatim() {
        let (tree, cat) = fixture();
        let p = build_prompt(PromptTemplate::Prompt2, Race::Protoss, 5, &cat, &tree, "summary").unwrap();
        assert!(p.system().contains("make exactly 5 decisions"));
        assert!(p.system().contains("indices 0 to 4"));
        for tok in [
            "TRAIN PROBE",
            "BUILD PYLON",
            "CHRONOBOOST NEXUS",
            "RESEARCH PSISTORMTECH",
            "EXPAND TO NEW RESOURCE LOCATION",
        ] {
            assert!(p.system().contains(&format!("<{tok}>")), "{tok}");
        }
        assert!(!p.system().contains("<TRAIN DRONE>"));
        assert_eq!(p.messages[0].role, Role::System);
        assert_eq!(p.user(), "summary");
        assert_eq!(p.temperature, 0.1);
        assert_eq!(p.max_tokens, 1024);
        let p3 = build_prompt(PromptTemplate::Prompt1, Race::Zerg, 3, &cat, &tree, "s").unwrap();
        assert!(p3.system().contains("Make exactly 3 decisions"));
    }

    #[test]
    fn template_shapes_differ() {
        let (tree, cat) = fixture();
        let one = build_prompt(PromptTemplate::Prompt1, Race::Protoss, 5, &cat, &tree, "s").unwrap();
        let two = build_prompt(PromptTemplate::Prompt2, Race::Protoss, 5, &cat, &tree, "s").unwrap();
        for aspect in [
            "Game Overview",
            "Current Game Stage",
            "Our Situation",
            "Our Strategy",
            "Enemy's Strategy",
            "Key Information",
            "Race Notes",
            "Suggestions",
            "Decisions",
        ] {
            assert!(two.system().contains(aspect), "{aspect}");
        }
        assert!(!one.system().contains("Suggestions"));
        assert!(!one.system().contains("Nexus's energy"));
        assert_eq!(PromptTemplate::detect(one.system()), Some(PromptTemplate::Prompt1));
        assert_eq!(PromptTemplate::detect(two.system()), Some(PromptTemplate::Prompt2));
        assert!(PromptTemplate::is_summary_request(summary_request(Race::Zerg, "x").system()));
    }

    #[test]
    fn empty_summary_rejected() {
        let (tree, cat) = fixture();
        assert_eq!(
            build_prompt(PromptTemplate::Prompt2, Race::Protoss, 5, &cat, &tree, "  "),
            Err(PromptError::EmptySummary)
        );
    }
}
