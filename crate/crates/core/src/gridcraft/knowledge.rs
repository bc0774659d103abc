//! Common-sense goal knowledge: which verb/noun goals are meaningful and
//! when their context holds.

use serde::{Deserialize, Serialize};

use crate::env_core::{Observation, StatusFlag};

pub const VERBS: [&str; 13] = [
    "do nothing",
    "move left",
    "move right",
    "move up",
    "move down",
    "sleep",
    "mine",
    "eat",
    "attack",
    "chop",
    "drink",
    "place",
    "make",
];

pub const NOUNS: [&str; 19] = [
    "zombie",
    "skeleton",
    "cow",
    "tree",
    "stone",
    "coal",
    "iron",
    "diamond",
    "water",
    "grass",
    "crafting table",
    "furnace",
    "plant",
    "wood pickaxe",
    "stone pickaxe",
    "iron pickaxe",
    "wood sword",
    "stone sword",
    "iron sword",
];

/// Verbs that never take a noun.
pub const BARE_VERBS: [&str; 6] = [
    "do nothing",
    "move left",
    "move right",
    "move up",
    "move down",
    "sleep",
];

/// A goal's context requirements.
struct Context {
    goal: &'static str,
    visible: &'static [&'static str],
    items: &'static [&'static str],
    status: Option<StatusFlag>,
}

const fn ctx(
    goal: &'static str,
    visible: &'static [&'static str],
    items: &'static [&'static str],
) -> Context {
    Context {
        goal,
        visible,
        items,
        status: None,
    }
}

const VALID: [Context; 25] = [
    ctx("chop tree", &["tree"], &[]),
    ctx("chop grass", &["grass"], &[]),
    ctx("drink water", &["water"], &[]),
    ctx("eat cow", &["cow"], &[]),
    ctx("attack cow", &["cow"], &[]),
    ctx("attack zombie", &["zombie"], &[]),
    ctx("attack skeleton", &["skeleton"], &[]),
    ctx("eat plant", &["plant"], &[]),
    ctx("place plant", &["grass"], &["sapling"]),
    ctx("place stone", &[], &["stone"]),
    ctx("place crafting table", &[], &["wood"]),
    ctx("make crafting table", &[], &["wood"]),
    ctx("place furnace", &["crafting table"], &["stone"]),
    ctx("make furnace", &["crafting table"], &["stone"]),
    ctx("make wood pickaxe", &["crafting table"], &["wood"]),
    ctx("make wood sword", &["crafting table"], &["wood"]),
    ctx("make stone pickaxe", &["crafting table"], &["wood", "stone"]),
    ctx("make stone sword", &["crafting table"], &["wood", "stone"]),
    ctx(
        "make iron pickaxe",
        &["crafting table", "furnace"],
        &["wood", "coal", "iron"],
    ),
    ctx(
        "make iron sword",
        &["crafting table", "furnace"],
        &["wood", "coal", "iron"],
    ),
    ctx("mine stone", &["stone"], &["wood pickaxe"]),
    ctx("mine coal", &["coal"], &["wood pickaxe"]),
    ctx("mine iron", &["iron"], &["stone pickaxe"]),
    ctx("mine diamond", &["diamond"], &["iron pickaxe"]),
    Context {
        goal: "sleep",
        visible: &[],
        items: &[],
        status: Some(StatusFlag::Sleepy),
    },
];

pub fn valid_goals() -> Vec<&'static str> {
    VALID.iter().map(|c| c.goal).collect()
}

pub fn is_valid_goal(goal: &str) -> bool {
    valid_goals().contains(&goal)
}

fn context_of(goal: &str) -> Option<&'static Context> {
    VALID.iter().find(|c| c.goal == goal)
}

/// Whether a valid goal's context preconditions hold in `obs`.
pub fn context_holds(goal: &str, obs: &Observation) -> bool {
    let Some(c) = context_of(goal) else {
        return false;
    };
    c.visible.iter().all(|k| obs.sees(k))
        && c.items.iter().all(|i| obs.count(i) > 0)
        && c.status.is_none_or(|s| obs.status.contains(&s))
}

/// Valid goals whose context holds, in canonical order.
pub fn oracle_goals(obs: &Observation) -> Vec<String> {
    valid_goals()
        .into_iter()
        .filter(|g| context_holds(g, obs))
        .map(str::to_string)
        .collect()
}

/// Parses free text into an action label of the space. Leading articles
/// are ignored and the longest verb prefix wins.
pub fn parse_goal(text: &str) -> Option<String> {
    let lowered = text.trim().trim_end_matches('.').to_lowercase();
    let words: Vec<&str> = lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the" | "some"))
        .collect();
    let joined = words.join(" ");
    let mut verbs: Vec<&str> = VERBS.to_vec();
    verbs.sort_by_key(|v| std::cmp::Reverse(v.len()));
    for verb in verbs {
        let Some(rest) = joined.strip_prefix(verb) else {
            continue;
        };
        let rest = rest.trim();
        if rest.is_empty() {
            return Some(verb.to_string());
        }
        if !BARE_VERBS.contains(&verb) && NOUNS.contains(&rest) {
            return Some(format!("{verb} {rest}"));
        }
        return None;
    }
    None
}

/// Suggestion-quality category of a goal in a given context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalCategory {
    Good,
    ContextInsensitive,
    CommonSenseInsensitive,
    Impossible,
}

impl GoalCategory {
    pub const ALL: [GoalCategory; 4] = [
        GoalCategory::ContextInsensitive,
        GoalCategory::CommonSenseInsensitive,
        GoalCategory::Good,
        GoalCategory::Impossible,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GoalCategory::Good => "good",
            GoalCategory::ContextInsensitive => "context_insensitive",
            GoalCategory::CommonSenseInsensitive => "common_sense_insensitive",
            GoalCategory::Impossible => "impossible",
        }
    }
}

pub fn classify_goal(goal: &str, obs: &Observation) -> GoalCategory {
    let Some(parsed) = parse_goal(goal) else {
        return GoalCategory::Impossible;
    };
    if !is_valid_goal(&parsed) {
        GoalCategory::CommonSenseInsensitive
    } else if context_holds(&parsed, obs) {
        GoalCategory::Good
    } else {
        GoalCategory::ContextInsensitive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_core::CellView;

    fn obs_with(kinds: &[&str], items: &[(&str, u32)]) -> Observation {
        Observation {
            local_view: vec![kinds.iter().map(|k| CellView::new(*k)).collect()],
            inventory: items.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn parses_goals() {
        assert_eq!(parse_goal("Chop tree").as_deref(), Some("chop tree"));
        assert_eq!(parse_goal("place the crafting table").as_deref(), Some("place crafting table"));
        assert_eq!(parse_goal("sleep").as_deref(), Some("sleep"));
        assert_eq!(parse_goal("make path"), None);
        assert_eq!(parse_goal("make wood"), None);
        assert_eq!(parse_goal("place lava"), None);
        assert_eq!(parse_goal("sleep tree"), None);
        assert_eq!(parse_goal("mine grass").as_deref(), Some("mine grass"));
    }

    #[test]
    fn categories() {
        let obs = obs_with(&["tree", "grass"], &[]);
        assert_eq!(classify_goal("chop tree", &obs), GoalCategory::Good);
        assert_eq!(classify_goal("drink water", &obs), GoalCategory::ContextInsensitive);
        assert_eq!(classify_goal("mine grass", &obs), GoalCategory::CommonSenseInsensitive);
        assert_eq!(classify_goal("make path", &obs), GoalCategory::Impossible);
    }

    #[test]
    fn oracle_respects_inventory() {
        let obs = obs_with(&["tree"], &[]);
        let goals = oracle_goals(&obs);
        assert!(goals.contains(&"chop tree".to_string()));
        assert!(!goals.contains(&"place crafting table".to_string()));
        let obs = obs_with(&["tree"], &[("wood", 1)]);
        assert!(oracle_goals(&obs).contains(&"place crafting table".to_string()));
        assert!(oracle_goals(&Observation::default()).is_empty());
    }

    #[test]
    fn valid_goals_are_parseable() {
        for g in valid_goals() {
            assert_eq!(parse_goal(g).as_deref(), Some(g));
        }
    }
}
