//! Downstream tasks with sparse extrinsic rewards.

use crate::error::{Error, Result};

pub const TASKS: [&str; 8] = [
    "place_table",
    "attack_cow",
    "make_wood_sword",
    "mine_stone",
    "deforestation",
    "gardening",
    "plant_row",
    "game_reward",
];

const MINE_STONE_CHAIN: [&str; 5] = [
    "collect_wood",
    "place_table",
    "collect_wood",
    "make_wood_pickaxe",
    "collect_stone",
];

/// Natural-language subgoal handed to goal-conditioned policies.
pub fn task_goal(task: &str) -> Option<&'static str> {
    Some(match task {
        "place_table" => "place crafting table",
        "attack_cow" => "attack cow",
        "make_wood_sword" => "make wood sword",
        "mine_stone" => "mine stone",
        "deforestation" => "chop tree",
        "gardening" => "place plant",
        "plant_row" => "place plant",
        "game_reward" => "chop tree",
        _ => return None,
    })
}

/// Incremental reward state for one task within one episode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskTracker {
    task: &'static str,
    progress: usize,
    complete: bool,
}

impl TaskTracker {
    pub fn new(task: &str) -> Result<Self> {
        let task = TASKS
            .iter()
            .find(|t| **t == task)
            .ok_or_else(|| Error::config(format!("unknown task `{task}`")))?;
        Ok(TaskTracker {
            task,
            progress: 0,
            complete: false,
        })
    }

    pub fn task(&self) -> &'static str {
        self.task
    }

    pub fn complete(&self) -> bool {
        self.complete
    }

    pub fn reset(&mut self) {
        self.progress = 0;
        self.complete = false;
    }

    /// Reward for one step given its effects (repeats included), first-unlock
    /// events and the positions of all plants after the step.
    pub fn reward(&mut self, effects: &[&str], events: &[&str], plants: &[(i32, i32)]) -> f64 {
        if self.task == "game_reward" {
            if !events.is_empty() {
                self.complete = true;
            }
            return events.len() as f64;
        }
        if self.complete {
            return 0.0;
        }
        let mut reward = 0.0;
        for effect in effects {
            match self.task {
                "place_table" | "make_wood_sword" => {
                    if *effect == self.task {
                        self.complete = true;
                        reward += 1.0;
                    }
                }
                "attack_cow" => {
                    if *effect == "eat_cow" {
                        self.complete = true;
                        reward += 1.0;
                    }
                }
                "mine_stone" => {
                    if MINE_STONE_CHAIN.get(self.progress) == Some(effect) {
                        self.progress += 1;
                        reward += 1.0;
                        self.complete = self.progress == MINE_STONE_CHAIN.len();
                    }
                }
                "deforestation" => {
                    if *effect == "collect_wood" {
                        self.progress += 1;
                        if self.progress == 4 {
                            self.complete = true;
                            reward += 1.0;
                        }
                    }
                }
                "gardening" => match (*effect, self.progress) {
                    ("collect_drink", 0) => self.progress = 1,
                    ("collect_sapling", 1) => {
                        self.complete = true;
                        reward += 1.0;
                    }
                    _ => {}
                },
                "plant_row" => {
                    if *effect == "place_plant" && has_adjacent_pair(plants) {
                        self.complete = true;
                        reward += 1.0;
                    }
                }
                _ => {}
            }
            if self.complete {
                break;
            }
        }
        reward
    }
}

/// Whether any two positions are 4-neighbours.
pub fn has_adjacent_pair(positions: &[(i32, i32)]) -> bool {
    positions.iter().enumerate().any(|(i, a)| {
        positions[i + 1..]
            .iter()
            .any(|b| (a.0 - b.0).abs() + (a.1 - b.1).abs() == 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mine_stone_pays_each_subtask() {
        let mut t = TaskTracker::new("mine_stone").unwrap();
        let total: f64 = MINE_STONE_CHAIN.iter().map(|e| t.reward(&[e], &[], &[])).sum();
        assert_eq!(total, 5.0);
        assert!(t.complete());
    }

    #[test]
    fn deforestation_needs_four() {
        let mut t = TaskTracker::new("deforestation").unwrap();
        for _ in 0..3 {
            assert_eq!(t.reward(&["collect_wood"], &[], &[]), 0.0);
        }
        assert_eq!(t.reward(&["collect_wood"], &[], &[]), 1.0);
    }

    #[test]
    fn gardening_order_matters() {
        let mut t = TaskTracker::new("gardening").unwrap();
        assert_eq!(t.reward(&["collect_sapling"], &[], &[]), 0.0);
        assert_eq!(t.reward(&["collect_drink"], &[], &[]), 0.0);
        assert_eq!(t.reward(&["collect_sapling"], &[], &[]), 1.0);
    }

    #[test]
    fn plant_row_adjacency() {
        let mut t = TaskTracker::new("plant_row").unwrap();
        assert_eq!(t.reward(&["place_plant"], &[], &[(3, 4), (5, 5)]), 0.0);
        assert_eq!(t.reward(&["place_plant"], &[], &[(3, 4), (3, 5)]), 1.0);
    }

    #[test]
    fn unknown_task() {
        assert!(TaskTracker::new("fly").is_err());
        for task in TASKS {
            assert!(task_goal(task).is_some());
        }
    }
}
