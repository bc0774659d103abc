//! Templated state and transition captioners, and the caption noise model.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env_core::{ActionOutcome, Observation, StatusFlag, VOID};
use crate::error::{Error, Result};
use crate::gridcraft::achievements::Item;
use crate::gridcraft::knowledge::{NOUNS, VERBS};

/// Fixed order of kinds in "You see" lists.
pub const KIND_ORDER: [&str; 16] = [
    "water",
    "grass",
    "sand",
    "plant",
    "tree",
    "stone",
    "path",
    "lava",
    "coal",
    "iron",
    "cow",
    "zombie",
    "skeleton",
    "diamond",
    "crafting table",
    "furnace",
];

/// "a", "a and b", "a, b, and c".
pub fn join_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [a] => a.to_string(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn kind_rank(kind: &str) -> (usize, &str) {
    let rank = KIND_ORDER
        .iter()
        .position(|k| *k == kind)
        .unwrap_or(KIND_ORDER.len());
    (rank, kind)
}

/// Text descriptor of an inventory item.
pub fn item_descriptor(token: &str) -> &str {
    match token {
        "sapling" => "plant",
        t => t,
    }
}

pub fn caption_state_crafter(obs: &Observation) -> String {
    let mut kinds: Vec<&str> = obs.visible_kinds().into_iter().collect();
    kinds.sort_by_key(|k| kind_rank(k));
    let mut sentences = Vec::new();
    if !kinds.is_empty() {
        sentences.push(format!("You see {}.", join_list(&kinds)));
    }
    if let Some(t) = obs.target.as_deref().filter(|t| *t != VOID) {
        sentences.push(format!("You are targeting {t}."));
    }
    let mut items: Vec<&str> = Item::ALL
        .iter()
        .filter(|i| obs.count(i.token()) > 0)
        .map(|i| item_descriptor(i.token()))
        .collect();
    for (name, n) in &obs.inventory {
        if *n > 0 && Item::from_token(name).is_none() {
            items.push(name);
        }
    }
    items.dedup();
    if !items.is_empty() {
        sentences.push(format!("You have in your inventory {}.", join_list(&items)));
    }
    for (flag, text) in [
        (StatusFlag::Hungry, "You are hungry."),
        (StatusFlag::Thirsty, "You are thirsty."),
        (StatusFlag::Sleepy, "You are sleepy."),
        (StatusFlag::LowHealth, "You have low health."),
    ] {
        if obs.status.contains(&flag) {
            sentences.push(text.to_string());
        }
    }
    sentences.join(" ")
}

/// Lowercase `verb noun` of a successful outcome, empty without one.
pub fn caption_transition_crafter(outcome: Option<&ActionOutcome>) -> String {
    match outcome {
        Some(ActionOutcome::Interact { verb, noun }) => match noun {
            Some(n) => format!("{verb} {n}").to_lowercase(),
            None => verb.to_lowercase(),
        },
        Some(other) => caption_transition_housegrid(Some(other)),
        None => String::new(),
    }
}

/// Inverse of [`caption_transition_crafter`] over the crafting action space.
pub fn parse_transition_crafter(caption: &str) -> Option<(String, Option<String>)> {
    for verb in VERBS {
        if caption == verb {
            return Some((verb.to_string(), None));
        }
        if let Some(rest) = caption.strip_prefix(verb).and_then(|r| r.strip_prefix(' ')) {
            if NOUNS.contains(&rest) {
                return Some((verb.to_string(), Some(rest.to_string())));
            }
        }
    }
    None
}

pub fn caption_state_housegrid(obs: &Observation) -> String {
    let mut sentences = Vec::new();
    for cell in obs.local_view.iter().flatten() {
        for object in &cell.contents {
            sentences.push(format!("You see {object} in/on {}.", cell.kind));
        }
    }
    if !obs.seen.is_empty() {
        sentences.push(format!("You have seen: {}.", obs.seen.join(", ")));
    }
    if let Some(h) = &obs.holding {
        sentences.push(format!("You are holding {h}."));
    }
    sentences.join(" ")
}

pub fn caption_transition_housegrid(outcome: Option<&ActionOutcome>) -> String {
    match outcome {
        Some(ActionOutcome::Pick { object }) => format!("pick {object}"),
        Some(ActionOutcome::Place { object, receptacle }) => {
            format!("place {object} in/on {receptacle}")
        }
        Some(ActionOutcome::Interact { .. }) => caption_transition_crafter(outcome),
        None => String::new(),
    }
}

/// Per-outcome caption emission probabilities. A row may emit several
/// captions since each column fires independently.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionConfusion {
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
    /// Probability that a row emits nothing at all, checked before the columns.
    #[serde(default)]
    pub false_negative: BTreeMap<String, f64>,
}

/// Column token that sets a row's false-negative probability in matrix files.
pub const NONE_COLUMN: &str = "<none>";

impl CaptionConfusion {
    pub fn identity<S: AsRef<str>>(tokens: &[S]) -> Self {
        let rows = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref().to_string();
                (t.clone(), BTreeMap::from([(t, 1.0)]))
            })
            .collect();
        CaptionConfusion {
            rows,
            false_negative: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, row: &str, column: &str, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!(
                "probability {p} for ({row}, {column}) is outside [0, 1]"
            )));
        }
        if column == NONE_COLUMN {
            self.false_negative.insert(row.to_string(), p);
        } else {
            self.rows
                .entry(row.to_string())
                .or_default()
                .insert(column.to_string(), p);
        }
        Ok(())
    }

    /// Reads `row,column,probability` triples (header optional).
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let mut out = CaptionConfusion::default();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            if record.len() != 3 {
                return Err(Error::Format(format!(
                    "{}: line {} has {} fields, expected 3",
                    path.display(),
                    i + 1,
                    record.len()
                )));
            }
            let p: f64 = match record[2].parse() {
                Ok(p) => p,
                Err(_) if i == 0 => continue,
                Err(_) => {
                    return Err(Error::Format(format!(
                        "{}: bad probability `{}`",
                        path.display(),
                        &record[2]
                    )))
                }
            };
            out.set(&record[0], &record[1], p)?;
        }
        Ok(out)
    }
}

/// Captions emitted for a true outcome under the noise model. Outcomes
/// without a row pass through unchanged.
pub fn inject_noise<R: Rng + ?Sized>(
    true_caption: &str,
    confusion: &CaptionConfusion,
    rng: &mut R,
) -> Vec<String> {
    if let Some(p) = confusion.false_negative.get(true_caption) {
        if rng.random::<f64>() < *p {
            return Vec::new();
        }
    }
    let Some(row) = confusion.rows.get(true_caption) else {
        return vec![true_caption.to_string()];
    };
    row.iter()
        .filter(|(_, p)| rng.random::<f64>() < **p)
        .map(|(c, _)| c.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_core::{enumerate_actions, CellView};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(kinds: &[&str], target: Option<&str>, inv: &[(&str, u32)]) -> Observation {
        Observation {
            local_view: vec![kinds.iter().map(|k| CellView::new(*k)).collect()],
            target: target.map(str::to_string),
            inventory: inv.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn crafter_state_template() {
        let o = obs(&["diamond", "cow", "grass", "water", "grass"], Some("grass"), &[("sapling", 1)]);
        assert_eq!(
            caption_state_crafter(&o),
            "You see water, grass, cow, and diamond. You are targeting grass. You have in your inventory plant."
        );
        let o = obs(&["tree", "plant", "skeleton"], Some("skeleton"), &[]);
        assert_eq!(
            caption_state_crafter(&o),
            "You see plant, tree, and skeleton. You are targeting skeleton."
        );
    }

    #[test]
    fn hungry_suffix() {
        let mut o = obs(&["grass"], None, &[]);
        o.status.insert(StatusFlag::Hungry);
        assert!(caption_state_crafter(&o).ends_with("You are hungry."));
    }

    #[test]
    fn transitions() {
        let o = ActionOutcome::Interact {
            verb: "eat".into(),
            noun: Some("cow".into()),
        };
        assert_eq!(caption_transition_crafter(Some(&o)), "eat cow");
        assert_eq!(caption_transition_crafter(None), "");
        let p = ActionOutcome::Place {
            object: "vase".into(),
            receptacle: "shelf".into(),
        };
        assert_eq!(caption_transition_housegrid(Some(&p)), "place vase in/on shelf");
    }

    #[test]
    fn transition_round_trip() {
        for a in enumerate_actions(&VERBS, &NOUNS).unwrap() {
            let o = ActionOutcome::Interact {
                verb: a.verb.clone(),
                noun: a.noun.clone(),
            };
            let c = caption_transition_crafter(Some(&o));
            assert_eq!(parse_transition_crafter(&c), Some((a.verb, a.noun)));
        }
    }

    #[test]
    fn housegrid_state() {
        let mut table = CellView::new("table");
        table.contents.push("vase".into());
        let o = Observation {
            local_view: vec![vec![table]],
            seen: vec!["table".into(), "sink".into()],
            ..Default::default()
        };
        assert_eq!(
            caption_state_housegrid(&o),
            "You see vase in/on table. You have seen: table, sink."
        );
    }

    #[test]
    fn identity_noise_is_passthrough() {
        let c = CaptionConfusion::identity(&["chop tree", "chop grass"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(inject_noise("chop tree", &c, &mut rng), vec!["chop tree"]);
            assert_eq!(inject_noise("eat cow", &c, &mut rng), vec!["eat cow"]);
        }
    }

    #[test]
    fn zero_diagonal_never_emits_self() {
        let mut c = CaptionConfusion::default();
        c.set("chop grass", "chop grass", 0.0).unwrap();
        c.set("chop grass", "collect sapling", 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(!inject_noise("chop grass", &c, &mut rng).contains(&"chop grass".to_string()));
        }
        assert!(c.set("a", "b", 1.5).is_err());
    }
}
