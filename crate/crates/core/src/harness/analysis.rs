//! Suggestion-quality analysis: every suggested and every rewarded goal is
//! assigned one category by environment predicates.
//!
//! - `impossible`: does not parse into a verb + noun of the action space
//! - `common_sense_insensitive`: parses, but is a permanent no-op
//! - `context_insensitive`: a valid goal whose preconditions did not hold
//! - `good`: everything else

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridcraft::knowledge::{classify_goal, GoalCategory};

use super::TranscriptEntry;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionVerdict {
    pub goal: String,
    pub category: GoalCategory,
    pub rewarded: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub counts: BTreeMap<GoalCategory, usize>,
}

impl CategoryCounts {
    pub fn add(&mut self, c: GoalCategory) {
        *self.counts.entry(c).or_default() += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, c: GoalCategory) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    /// Fraction of the column in `c`; 0 for an empty column.
    pub fn fraction(&self, c: GoalCategory) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.count(c) as f64 / n as f64,
        }
    }

    /// Percentage rounded to one decimal place.
    pub fn percent(&self, c: GoalCategory) -> f64 {
        (self.fraction(c) * 1000.0).round() / 10.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuggestionAnalysis {
    pub suggested: CategoryCounts,
    pub rewarded: CategoryCounts,
    pub verdicts: Vec<SuggestionVerdict>,
}

impl SuggestionAnalysis {
    /// Plain-text table of percentages per category.
    pub fn table(&self) -> String {
        let mut s = format!("{:<26}{:>11}{:>10}\n", "category", "suggested", "rewarded");
        for c in GoalCategory::ALL {
            let _ = writeln!(
                s,
                "{:<26}{:>10.1}%{:>9.1}%",
                c.label(),
                self.suggested.percent(c),
                self.rewarded.percent(c)
            );
        }
        let _ = writeln!(s, "{:<26}{:>11}{:>10}", "n", self.suggested.total(), self.rewarded.total());
        s
    }
}

pub fn analyze_suggestions(transcript: &[TranscriptEntry]) -> SuggestionAnalysis {
    let mut out = SuggestionAnalysis::default();
    for entry in transcript {
        match entry {
            TranscriptEntry::Suggested { goals, context, .. } => {
                let obs = context.to_observation();
                for g in goals {
                    let category = classify_goal(g, &obs);
                    out.suggested.add(category);
                    out.verdicts.push(SuggestionVerdict {
                        goal: g.clone(),
                        category,
                        rewarded: false,
                    });
                }
            }
            TranscriptEntry::Rewarded { goal, context, .. } => {
                let category = classify_goal(goal, &context.to_observation());
                out.rewarded.add(category);
                out.verdicts.push(SuggestionVerdict {
                    goal: goal.clone(),
                    category,
                    rewarded: true,
                });
            }
        }
    }
    out
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ContextSnapshot;

    fn suggested(goals: &[&str], visible: &[&str]) -> TranscriptEntry {
        TranscriptEntry::Suggested {
            seed: 0,
            episode: 0,
            step: 0,
            caption: String::new(),
            goals: goals.iter().map(|g| g.to_string()).collect(),
            context: ContextSnapshot {
                visible: visible.iter().map(|v| v.to_string()).collect(),
                ..Default::default()
            },
        }
    }

    #[test]
    fn categories_and_fractions() {
        let t = vec![suggested(&["chop tree", "drink water", "mine grass", "make path"], &["tree", "grass"])];
        let a = analyze_suggestions(&t);
        for c in GoalCategory::ALL {
            assert_eq!(a.suggested.count(c), 1);
            assert_eq!(a.suggested.fraction(c), 0.25);
        }
        assert_eq!(a.rewarded.total(), 0);
        assert_eq!(a.rewarded.fraction(GoalCategory::Impossible), 0.0);
        assert!(a.table().contains("25.0%"));
    }
}
