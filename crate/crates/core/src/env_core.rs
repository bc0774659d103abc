//! Shared environment abstraction: action enumeration, observations,
//! step results and the per-episode achievement ledger.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A verb with an optional noun argument, e.g. `chop tree` or `sleep`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionSpec {
    pub verb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noun: Option<String>,
}

impl ActionSpec {
    pub fn new(verb: impl Into<String>, noun: Option<&str>) -> Self {
        ActionSpec {
            verb: verb.into(),
            noun: noun.map(str::to_string),
        }
    }

    /// Lowercase `verb noun` label, also used as the goal string for the action.
    pub fn label(&self) -> String {
        match &self.noun {
            Some(n) => format!("{} {}", self.verb, n),
            None => self.verb.clone(),
        }
    }
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_tokens(kind: &str, tokens: &[&str]) -> Result<()> {
    let mut seen = HashSet::new();
    for t in tokens {
        if t.trim().is_empty() {
            return Err(Error::config(format!("empty {kind} token")));
        }
        if !seen.insert(*t) {
            return Err(Error::config(format!("duplicate {kind} token `{t}`")));
        }
    }
    Ok(())
}

/// Enumerates the combinatorial action space: every verb alone, then every
/// verb paired with every noun. Order is verb-major with the noun-less
/// action first in each verb block.
///
/// An empty noun list is accepted and yields one action per verb.
pub fn enumerate_actions(verbs: &[&str], nouns: &[&str]) -> Result<Vec<ActionSpec>> {
    if verbs.is_empty() {
        return Err(Error::config("verb list is empty"));
    }
    check_tokens("verb", verbs)?;
    check_tokens("noun", nouns)?;
    let mut out = Vec::with_capacity(verbs.len() * (nouns.len() + 1));
    for v in verbs {
        out.push(ActionSpec::new(*v, None));
        for n in nouns {
            out.push(ActionSpec::new(*v, Some(n)));
        }
    }
    Ok(out)
}

/// Compass direction in grid coordinates (y grows downwards).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn turn_left(self) -> Self {
        match self {
            Direction::Up => Direction::Left,
            Direction::Left => Direction::Down,
            Direction::Down => Direction::Right,
            Direction::Right => Direction::Up,
        }
    }

    pub fn turn_right(self) -> Self {
        match self {
            Direction::Up => Direction::Right,
            Direction::Right => Direction::Down,
            Direction::Down => Direction::Left,
            Direction::Left => Direction::Up,
        }
    }
}

/// Agent position and heading.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    pub facing: Direction,
}

/// One cell of the symbolic local view.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellView {
    /// Visible kind: the mob or placement occupying the cell, else the terrain.
    pub kind: String,
    /// Items resting in the cell (objects in a receptacle).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contents: Vec<String>,
}

impl CellView {
    pub fn new(kind: impl Into<String>) -> Self {
        CellView {
            kind: kind.into(),
            contents: Vec::new(),
        }
    }
}

/// Kind used for cells outside the map or outside the field of view.
pub const VOID: &str = "void";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusFlag {
    Hungry,
    Thirsty,
    Sleepy,
    LowHealth,
}

/// Survival meters, each in `0..=9`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vitals {
    pub health: u8,
    pub food: u8,
    pub drink: u8,
    pub energy: u8,
}

/// Everything the agent and the captioners may see.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    /// Row-major window of cells; the agent is at the center for top-down
    /// views, and at the bottom-center edge for egocentric views.
    pub local_view: Vec<Vec<CellView>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inventory: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub status: BTreeSet<StatusFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holding: Option<String>,
    /// Receptacles seen so far this episode, in discovery order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seen: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vitals: Option<Vitals>,
}

impl Observation {
    /// Set of visible kinds (excluding void cells).
    pub fn visible_kinds(&self) -> BTreeSet<&str> {
        self.local_view
            .iter()
            .flatten()
            .map(|c| c.kind.as_str())
            .filter(|k| *k != VOID)
            .collect()
    }

    pub fn sees(&self, kind: &str) -> bool {
        self.local_view.iter().flatten().any(|c| c.kind == kind)
    }

    pub fn count(&self, item: &str) -> u32 {
        self.inventory.get(item).copied().unwrap_or(0)
    }
}

/// What a successful interaction did, in captionable form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionOutcome {
    Interact {
        verb: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noun: Option<String>,
    },
    Pick {
        object: String,
    },
    Place {
        object: String,
        receptacle: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    /// First-time achievements of this episode.
    pub events: Vec<String>,
    /// Every achievement-style effect of this step, repeats included.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<String>,
    pub action_outcome: Option<ActionOutcome>,
    pub done: bool,
    pub extrinsic_reward: f64,
}

/// Goals achieved so far in the current episode plus the episode clock.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeLedger {
    achieved: BTreeSet<String>,
    step_count: u64,
}

impl EpisodeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mark(&mut self, goal: &str) -> bool {
        self.achieved.insert(goal.to_string())
    }

    pub fn contains(&self, goal: &str) -> bool {
        self.achieved.contains(goal)
    }

    pub fn achieved(&self) -> &BTreeSet<String> {
        &self.achieved
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn tick(&mut self) {
        self.step_count += 1;
    }

    pub fn clear(&mut self) {
        self.achieved.clear();
        self.step_count = 0;
    }
}

/// Common interface of the symbolic worlds.
pub trait Environment: Send {
    fn id(&self) -> &'static str;

    fn action_space(&self) -> &[ActionSpec];

    fn action_index(&self, action: &ActionSpec) -> Option<usize> {
        self.action_space().iter().position(|a| a == action)
    }

    /// Regenerates the world from `seed` and clears the ledger.
    fn reset(&mut self, seed: u64) -> Observation;

    /// Applies the action with the given index.
    ///
    /// Panics if `action` is outside the action space.
    fn step(&mut self, action: usize) -> StepResult;

    fn step_spec(&mut self, action: &ActionSpec) -> StepResult {
        let idx = self
            .action_index(action)
            .unwrap_or_else(|| panic!("action `{action}` is not in the action space"));
        self.step(idx)
    }

    fn observation(&self) -> Observation;

    /// Whether the episode ended on the step cap rather than a terminal state.
    fn truncated(&self) -> bool {
        false
    }

    /// Goals achieved this episode; the caller marks them after rewarding.
    fn ledger(&self) -> &EpisodeLedger;

    fn ledger_mut(&mut self) -> &mut EpisodeLedger;

    fn caption_state(&self, obs: &Observation) -> String;

    fn caption_transition(&self, outcome: Option<&ActionOutcome>) -> String;

    /// Fixed-length symbolic feature vector fed to networks.
    fn features(&self, obs: &Observation) -> Vec<f64>;

    fn feature_dim(&self) -> usize;

    /// Every goal string the environment can express (one per action label
    /// for the crafting world, every pick/place caption for rearrangement).
    fn expressible_goals(&self) -> Vec<String>;

    /// Common-sense goals whose context preconditions hold in `obs`.
    fn oracle_goals(&self, obs: &Observation) -> Vec<String>;

    /// Distinct achievements unlocked during the current episode.
    fn unique_achievements(&self) -> usize;

    /// Rearrangement success rate, when the environment defines one.
    fn success_rate(&self) -> Option<f64> {
        None
    }

    /// Selects the downstream task that drives `extrinsic_reward`.
    fn set_task(&mut self, task: Option<&str>) -> Result<()>;

    /// Whether the configured task has been completed this episode.
    fn task_success(&self) -> bool;

    /// Hash of the agent-relevant state, used for episodic visit counts.
    fn state_hash(&self) -> u64;
}

/// Writes step results as JSON lines.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Self {
        TrajectoryWriter { out }
    }

    pub fn write(&mut self, step: &StepResult) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, step)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_trajectory(path: &Path) -> Result<Vec<StepResult>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_verbs_three_nouns() {
        let a = enumerate_actions(&["eat", "chop"], &["tree", "cow", "water"]).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a[0].label(), "eat");
        assert_eq!(a[1].label(), "eat tree");
        assert_eq!(a[4].label(), "chop");
    }

    #[test]
    fn empty_nouns_gives_bare_verbs() {
        let a = enumerate_actions(&["sleep"], &[]).unwrap();
        assert_eq!(a, vec![ActionSpec::new("sleep", None)]);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            enumerate_actions(&["eat", "eat"], &["tree"]),
            Err(Error::Config(_))
        ));
        assert!(enumerate_actions(&["eat"], &["tree", "tree"]).is_err());
        assert!(enumerate_actions(&[], &["tree"]).is_err());
    }

    #[test]
    fn ledger_clear() {
        let mut l = EpisodeLedger::new();
        l.mark("chop tree");
        l.tick();
        assert!(l.contains("chop tree"));
        l.clear();
        assert_eq!(l.step_count(), 0);
        assert!(l.achieved().is_empty());
    }

    proptest! {
        #[test]
        fn action_count_formula(nv in 1usize..15, nn in 0usize..25) {
            let verbs: Vec<String> = (0..nv).map(|i| format!("v{i}")).collect();
            let nouns: Vec<String> = (0..nn).map(|i| format!("n{i}")).collect();
            let vr: Vec<&str> = verbs.iter().map(String::as_str).collect();
            let nr: Vec<&str> = nouns.iter().map(String::as_str).collect();
            let a = enumerate_actions(&vr, &nr).unwrap();
            prop_assert_eq!(a.len(), nv * (nn + 1));
            let unique: HashSet<_> = a.iter().collect();
            prop_assert_eq!(unique.len(), a.len());
        }
    }
}
