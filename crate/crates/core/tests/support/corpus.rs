use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textcraft_core::extractor::{extract, match_one, ActionCatalog, MatchMethod};
use textcraft_core::sim::MacroAction;
use textcraft_core::techtree::TechTree;

/// Reference decision blocks with the canonical token each line must resolve to.
pub const BLOCKS: &[(&str, &[&str])] = &[
    (
        "Decisions:0: <BUILD PHOTONCANNON> 1: <BUILD SHIELDBATTERY>",
        &["BUILD PHOTONCANNON", "BUILD SHIELDBATTERY"],
    ),
    ("Decisions: 4: <RESEARCH PSISTORMTECH>", &["RESEARCH PSISTORMTECH"]),
    (
        "Decisions:\n0: <BUILD NEXUS>\n1: <BUILD PYLON>\n2: <BUILD GATEWAY>\n3: <TRAIN PROBE>\n4: <SCOUTING PROBE>",
        &["BUILD NEXUS", "BUILD PYLON", "BUILD GATEWAY", "TRAIN PROBE", "SCOUTING PROBE"],
    ),
    (
        "Decisions:\n0: <RESEARCH WARPGATERESEARCH>\n1: <BUILD ZEALOT>\n2: <BUILD PROBE>\n3: <BUILD PYLON>\n4: <CHRONOBOOST CYBERNETICSCORE>",
        &["RESEARCH WARPGATERESEARCH", "TRAIN ZEALOT", "TRAIN PROBE", "BUILD PYLON", "CHRONOBOOST CYBERNETICSCORE"],
    ),
    (
        "Decisions:\n0: <TRAIN PROBE>\n1: <BUILD GATEWAY>\n2: <EXPAND TO NEW RESOURCE LOCATION>\n3: <BUILD ROBOTICSFACILITY>\n4: <CHRONOBOOST NEXUS>",
        &["TRAIN PROBE", "BUILD GATEWAY", "EXPAND TO NEW RESOURCE LOCATION", "BUILD ROBOTICSFACILITY", "CHRONOBOOST NEXUS"],
    ),
    (
        "Decisions:\n0: <TRAIN PHOENIX>\n1: <TRAIN VOIDRAY>\n2: <BUILD STARGATE>\n3: <TRAIN STALKER>\n4: <TRAIN COLOSSUS>",
        &["TRAIN PHOENIX", "TRAIN VOIDRAY", "BUILD STARGATE", "TRAIN STALKER", "TRAIN COLOSSUS"],
    ),
    (
        "Decisions:\n0: <TRAIN STALKER>\n1: <TRAIN IMMORTAL>\n2: <BUILD GATEWAY>\n3: <BUILD SHIELDBATTERY>\n4: <EXPAND TO NEW RESOURCE LOCATION>",
        &["TRAIN STALKER", "TRAIN IMMORTAL", "BUILD GATEWAY", "BUILD SHIELDBATTERY", "EXPAND TO NEW RESOURCE LOCATION"],
    ),
];

pub fn setup() -> (TechTree, ActionCatalog) {
    let tree = TechTree::default_tree();
    let cat = ActionCatalog::default_for(&tree);
    (tree, cat)
}

/// Actions named by canonical or alias tokens; every token must match exactly.
pub fn actions_of(tokens: &[&str], cat: &ActionCatalog) -> Vec<MacroAction> {
    tokens
        .iter()
        .map(|t| {
            let m = match_one(t, cat);
            assert_eq!(m.method, MatchMethod::Exact, "{t}");
            m.action
        })
        .collect()
}

/// Blocks extracted with every action exact, against the block count.
pub fn exact_blocks(cat: &ActionCatalog) -> Result<usize, String> {
    for (text, want) in BLOCKS {
        let ex = extract(text, want.len(), cat);
        if ex.actions != actions_of(want, cat) {
            return Err(format!("wrong actions for {text:?}"));
        }
        if !ex.matches.iter().all(|m| m.method == MatchMethod::Exact) || !ex.diagnostics.is_empty() {
            return Err(format!("inexact match in {text:?}: {:?}", ex.diagnostics));
        }
    }
    Ok(BLOCKS.len())
}

pub fn token_count() -> usize {
    BLOCKS.iter().map(|(_, want)| want.len()).sum()
}

/// One or two random formatting or spelling slips.
pub fn perturb(token: &str, rng: &mut ChaCha8Rng) -> String {
    let mut s = token.to_string();
    for _ in 0..rng.random_range(1..=2) {
        s = match rng.random_range(0..8) {
            0 => s.to_lowercase(),
            1 => s
                .split(' ')
                .map(|w| {
                    let mut c = w.chars();
                    c.next()
                        .map(|f| f.to_uppercase().chain(c.flat_map(char::to_lowercase)).collect())
                        .unwrap_or_default()
                })
                .collect::<Vec<String>>()
                .join(" "),
            2 => s.replace(' ', "  "),
            3 => s.replace(' ', "_"),
            4 => format!("{s}S"),
            5 => {
                let chars: Vec<char> = s.chars().collect();
                let i = rng.random_range(chars.len() / 2..chars.len());
                chars.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c).collect()
            }
            6 => {
                let mut chars: Vec<char> = s.chars().collect();
                let i = rng.random_range(chars.len() / 2..chars.len() - 1);
                chars.swap(i, i + 1);
                chars.into_iter().collect()
            }
            _ => format!("**{s}**."),
        };
    }
    s
}

/// Share of `trials` perturbed catalog tokens that resolve back to their action.
pub fn recovery_rate(seed: u64, trials: usize, cat: &ActionCatalog) -> f64 {
    let tokens = cat.canonical_tokens();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut recovered = 0;
    for i in 0..trials {
        let token = *tokens.choose(&mut rng).unwrap();
        let noisy = perturb(token, &mut rng);
        let text = format!("Decisions:\n{}: <{noisy}>", i % 5);
        let ex = extract(&text, 1, cat);
        if cat.token_of(&ex.actions[0]) == Some(token) {
            recovered += 1;
        } else if std::env::var("SHOW_MISSES").is_ok() {
            eprintln!("{token} -> {noisy} -> {:?}", cat.token_of(&ex.actions[0]));
        }
        let direct = match_one(&noisy, cat);
        assert!((0.0..=1.0).contains(&direct.score));
    }
    recovered as f64 / trials as f64
}
